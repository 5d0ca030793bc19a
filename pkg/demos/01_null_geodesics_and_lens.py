# %% [markdown]
# # Null geodesics and the lens relation
#
# Trace a light ray in flat space on the cylinder ``[0, 5] x unit disk``,
# reflect it off the wall, and compare the exit covector with the straight
# chord.  Then repeat in a warped metric and watch the null residual.

# %%
import numpy as np

from magcalderon.bicharacteristics import lens_relation
from magcalderon.checks import minkowski_chord
from magcalderon.scenarios import get_scenario

flat = get_scenario("minkowski-disk")
x, xi = np.array([1.5, -1.0, 0.0]), np.array([-1.0, 0.0, 0.3])

# %% a single chord
res = lens_relation(flat.metric, x, xi, 0, flat.domain)
print("exit point     ", res.out.x)
print("travel time    ", res.travel_time)
print("null residual  ", res.trajectory.null_residual)
print("closed form    ", minkowski_chord(x, xi))

# %% one reflection off the wall
res1 = lens_relation(flat.metric, x, xi, 1, flat.domain)
print("reflections", res1.trajectory.reflection_count, "exit", res1.out.x)

# %% a warped metric bends the ray but keeps it null
warped = get_scenario("warped-disk")
resw = lens_relation(warped.metric, x, xi, 0, warped.domain)
print("warped exit", resw.out.x, "null residual", resw.trajectory.null_residual)
