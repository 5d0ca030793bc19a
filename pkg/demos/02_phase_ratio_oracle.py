# %% [markdown]
# # The boundary phase oracle
#
# The oracle answers one question for a covector pair: by how much does a
# change of magnetic potential rotate the principal symbol?  Exact forms do
# nothing; a bump aligned with the ray rotates it by ``exp(i/C)``.

# %%
import numpy as np

from magcalderon.oracle import ElectromagneticScenario, SymbolOracle
from magcalderon.perturbations import make_aligned_one_form, make_exact_form
from magcalderon.scenarios import get_scenario

orc = SymbolOracle(ElectromagneticScenario.from_scenario(get_scenario("minkowski-disk")))
x, xi = (1.5, -1.0, 0.0), (-1.0, 0.0, 0.3)
lens = orc.trace(x, xi)

# %% gauge: an exact form is invisible
dphi = make_exact_form([2.0, 0.1, 0.0], 0.3, 5.0, domain=orc.domain)
print("exact form ratio", orc.phase_ratio(dphi, x, xi).value)

# %% an aligned bump gives a prescribed phase
lo, hi = lens.trajectory.sigma_range
for C in (5.0, 10.0, 100.0):
    form = make_aligned_one_form(lens.trajectory, 0.5 * (lo + hi), 0.1 * (hi - lo), C, 0.05, metric=orc.metric, domain=orc.domain)
    r = orc.phase_ratio(form, x, xi)
    print(f"C={C:6g}  ratio={r.value:.12f}  target={np.exp(1j / C):.12f}")

# %% the full symbol picks its sign from the time orientation
print("future", orc.full_principal_symbol([0.5, -1.0, 0.0], [-1.0, 0.0, 0.0], 1).amplitude)
print("past  ", orc.full_principal_symbol([4.5, -1.0, 0.0], [1.0, 0.0, 0.0], 1, "past").amplitude)
