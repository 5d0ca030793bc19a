# %% [markdown]
# # Magnetic Laplacian on the unit cube
#
# Solve the Dirichlet problem, read the DN map, perturb the potential by a
# localized one-form and compare the two linearization routes.  Shrinking
# the support of the perturbation recovers the coupled gradient at a point.

# %%
import warnings

import numpy as np

from magcalderon.perturbations import LocalizedOneForm
from magcalderon.riemann import RiemannOracle, boundary_functional, dn_map, linearized_response, recover_coupled_gradient
from magcalderon.scenarios import get_scenario

g = get_scenario("aniso-box").metric


def x1(X):
    return np.asarray(X)[..., 0]


# %% DN map of an affine datum
dn = dn_map(g, None, x1, N=17)
print("DN flux", boundary_functional(g, dn))

# %% the adjoint route against the finite-difference route
h = LocalizedOneForm([0.45, 0.5, 0.55], 0.2, [1.0, 0.5, -0.3])
a = boundary_functional(g, linearized_response(g, x1, h, N=17, route="a"))
b = boundary_functional(g, linearized_response(g, x1, h, N=17, route="b"))
print("adjoint", RiemannOracle(g, 17).response_functional(x1, h))
print("route a", a, "route b", b, "gap", abs(a - b))

# %% coupled gradient at the centre
with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    cg = recover_coupled_gradient(RiemannOracle(get_scenario("euclid-box").metric, 33), x1, [0.5, 0.5, 0.5])
print("coupled gradient", cg.value)
