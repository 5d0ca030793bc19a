# %% [markdown]
# # Locating a light ray from boundary data
#
# A point is declared a member of the ray when random perturbations
# supported in a small ball around it change the boundary phase.
# Scanning a grid of such balls recovers the chord to within the grid
# spacing plus the ball radius.

# %%
import numpy as np

from magcalderon.oracle import ElectromagneticScenario, SymbolOracle
from magcalderon.reconstruction import hausdorff, membership_test, scan_trajectory
from magcalderon.scenarios import get_scenario

orc = SymbolOracle(ElectromagneticScenario.from_scenario(get_scenario("minkowski-disk")))
x, xi = (1.5, -1.0, 0.0), (-1.0, 0.0, 0.3)
lens = orc.trace(x, xi)
lo, hi = lens.trajectory.sigma_range
on = lens.trajectory.state(0.5 * (lo + hi))[:3]
off = on + np.array([0.0, 0.0, 0.4])

# %% one point on the ray, one well away from it
for name, p in (("on", on), ("off", off)):
    v = membership_test(orc, x, xi, p, 0.1, 20, "em", seed=0)
    print(name, v.verdict, "distance", round(v.distance, 4))

# %% a coarse scan
est = scan_trajectory(orc, x, xi, spacing=0.1, r=0.1, N=10, seed=0)
print("flagged points", est.flagged.shape[0], "hausdorff", round(est.hausdorff, 4))
