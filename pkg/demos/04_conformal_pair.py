# %% [markdown]
# # Conformal invariance of the reconstruction
#
# Null rays depend only on the conformal class.  A conformally rescaled
# Minkowski metric yields the same scan estimate; an anisotropic metric
# does not.

# %%
from magcalderon.oracle import ElectromagneticScenario, SymbolOracle
from magcalderon.reconstruction import conformal_check
from magcalderon.scenarios import get_scenario


def oracle(name):
    return SymbolOracle(ElectromagneticScenario.from_scenario(get_scenario(name)))


flat, conf, aniso = oracle("minkowski-disk"), oracle("conformal-minkowski"), oracle("aniso-disk")
probes = [((1.5, -1.0, 0.0), (-1.0, 0.0, 0.5))]

# %%
for name, other in (("conformal", conf), ("anisotropic", aniso)):
    rep = conformal_check(flat, other, probes, spacing=0.1, r=0.1, N=10)
    print(f"{name:12s} discrepancy {rep.max_discrepancy:.4f}  tolerance {rep.tolerance:.2f}  agree {rep.passed}")
