# %% [markdown]
# # Runge fitting and deciding metric equality
#
# Harmonic functions with a prescribed 2-jet are fitted from boundary data.
# They probe whether ``B`` acts as a scalar, and the determinant step then
# separates ``g`` from ``c^2 g``.

# %%
import warnings

import numpy as np

from magcalderon.riemann import RiemannOracle, RungeBasis, RungeTarget, hessian_probe, metric_equality_decision, runge_fit
from magcalderon.scenarios import get_scenario

euclid = get_scenario("euclid-box").metric
basis = RungeBasis(euclid, 33, 200)
p = [0.5, 0.5, 0.5]

# %% a trace free Hessian target
fit = runge_fit(basis, RungeTarget(p, 0.0, np.zeros(3), np.diag([1.0, -1.0, 0.0])))
print("fit residual", fit.residual)
print(np.round(fit.hessian, 6))

# %% Hessian probes
for B in (np.eye(3), 2 * np.eye(3), np.diag([1.0, 2.0, 1.0])):
    hp = hessian_probe(basis, B, p)
    print(np.diag(B), "scalar", hp.scalar_verdict, "C", round(hp.C, 6))

# %% the full decision
a, b = RiemannOracle(euclid, 33, "a"), RiemannOracle(get_scenario("scaled-box").metric, 33, "b")
with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    print(metric_equality_decision(a, RiemannOracle(euclid, 33, "a2"), [p]).verdict)
    print(metric_equality_decision(a, b, [p], check_boundary=False).witness)
