"""Named catalog of metrics and domains used throughout the package."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .bump import radial_bump, radial_bump_gradient
from .geometry import (
    Domain,
    Field,
    MetricField,
    OneFormField,
    ScalarField,
    lorentz_cylinder,
    riemann_box,
)

__all__ = ["Scenario", "get_scenario", "scenario_ids", "catalog", "UnknownScenarioError", "constant_metric"]


class UnknownScenarioError(KeyError):
    pass


@dataclass
class Scenario:
    """Catalog entry.

    Attributes
    ----------
    id : str
    domain : Domain
    metric : MetricField
    params : dict
        Parameters that define the metric, echoed in reports.
    background : OneFormField or None
        Background potential; ``None`` means zero.
    potential : ScalarField or None
        Zeroth order potential; carried but never used by the oracles.
    conformal_base : str or None
        Id of the scenario this one is conformally related to.
    """

    id: str
    domain: Domain
    metric: MetricField
    description: str
    params: dict = field(default_factory=dict)
    background: Optional[Field] = None
    potential: Optional[Field] = None
    conformal_base: Optional[str] = None

    @property
    def signature(self) -> str:
        return self.metric.signature

    def schema(self) -> dict:
        return {
            "id": self.id,
            "kind": self.domain.kind,
            "signature": self.signature,
            "description": self.description,
            "params": self.params,
            "param_types": {k: type(v).__name__ for k, v in self.params.items()},
            "conformal_base": self.conformal_base,
            "closed_form_derivative": self.metric.has_closed_form_derivative,
        }


def constant_metric(G, signature: str, name: str) -> MetricField:
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    return MetricField(
        lambda X: np.broadcast_to(G, np.shape(X)[:-1] + (n, n)),
        signature,
        name,
        lambda X: np.zeros(np.shape(X)[:-1] + (n, n, n)),
        dim=n,
    )


def _minkowski(T):
    return Scenario(
        "minkowski-disk",
        lorentz_cylinder(3, T),
        constant_metric(np.diag([-1.0, 1.0, 1.0]), "lorentzian", "minkowski"),
        "flat metric -dt^2 + dx1^2 + dx2^2 on the unit disk cylinder",
        {"T": T},
    )


def _conformal(T, amp=0.2, center=(2.5, 0.0, 0.0), radius=0.6):
    c = np.asarray(center, float)
    eta = np.diag([-1.0, 1.0, 1.0])

    def ev(X):
        phi = amp * radial_bump(X, c, radius)
        return np.exp(2.0 * phi)[..., None, None] * eta

    def dv(X):
        phi = amp * radial_bump(X, c, radius)
        dphi = amp * radial_bump_gradient(X, c, radius)
        return (2.0 * np.exp(2.0 * phi))[..., None, None, None] * dphi[..., :, None, None] * eta

    return Scenario(
        "conformal-minkowski",
        lorentz_cylinder(3, T),
        MetricField(ev, "lorentzian", "conformal-minkowski", dv),
        "exp(2 phi) times the flat metric, phi an interior bump",
        {"T": T, "amplitude": amp, "center": list(center), "radius": radius},
        conformal_base="minkowski-disk",
    )


def _warped(T, k=0.1):
    def ev(X):
        w = 1.0 + k * X[..., 1] ** 2
        G = np.zeros(X.shape[:-1] + (3, 3))
        G[..., 0, 0] = -1.0
        G[..., 1, 1] = w
        G[..., 2, 2] = w
        return G

    def dv(X):
        D = np.zeros(X.shape[:-1] + (3, 3, 3))
        D[..., 1, 1, 1] = 2.0 * k * X[..., 1]
        D[..., 1, 2, 2] = 2.0 * k * X[..., 1]
        return D

    return Scenario(
        "warped-disk",
        lorentz_cylinder(3, T),
        MetricField(ev, "lorentzian", "warped-disk", dv),
        "-dt^2 + (1 + k x1^2)(dx1^2 + dx2^2)",
        {"T": T, "k": k},
    )


def _aniso_disk(T):
    return Scenario(
        "aniso-disk",
        lorentz_cylinder(3, T),
        constant_metric(np.diag([-1.0, 1.0, 2.0]), "lorentzian", "aniso-disk"),
        "-dt^2 + dx1^2 + 2 dx2^2, not conformal to the flat metric",
        {"T": T},
    )


def _euclid_box():
    return Scenario(
        "euclid-box",
        riemann_box(3),
        constant_metric(np.eye(3), "riemannian", "euclid"),
        "Euclidean metric on the unit cube",
    )


def _aniso_box(amp=0.5, center=(0.5, 0.5, 0.5), radius=0.3):
    c = np.asarray(center, float)
    peak = np.e  # rescales the bump to unit height at its center

    def ev(X):
        b = peak * amp * radial_bump(X, c, radius)
        G = np.broadcast_to(np.eye(3), X.shape[:-1] + (3, 3)).copy()
        G[..., 1, 1] += b
        return G

    def dv(X):
        db = peak * amp * radial_bump_gradient(X, c, radius)
        D = np.zeros(X.shape[:-1] + (3, 3, 3))
        D[..., :, 1, 1] = db
        return D

    return Scenario(
        "aniso-box",
        riemann_box(3),
        MetricField(ev, "riemannian", "aniso-box", dv),
        "identity plus an interior bump stretching the x2 direction (peak factor 1 + amp)",
        {"amplitude": amp, "center": list(center), "radius": radius},
    )


def _scaled_box(c2=4.0):
    return Scenario(
        "scaled-box",
        riemann_box(3),
        constant_metric(c2 * np.eye(3), "riemannian", "scaled-euclid"),
        "constant multiple of the Euclidean metric",
        {"factor": c2},
    )


_BUILDERS: dict[str, Callable[..., Scenario]] = {
    "minkowski-disk": lambda T=5.0: _minkowski(T),
    "conformal-minkowski": lambda T=5.0: _conformal(T),
    "warped-disk": lambda T=5.0: _warped(T),
    "aniso-disk": lambda T=5.0: _aniso_disk(T),
    "euclid-box": lambda T=None: _euclid_box(),
    "aniso-box": lambda T=None: _aniso_box(),
    "scaled-box": lambda T=None: _scaled_box(),
}


def scenario_ids() -> list[str]:
    return list(_BUILDERS)


def get_scenario(name: str, T: Optional[float] = None) -> Scenario:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise UnknownScenarioError(f"unknown scenario id {name!r}; known: {', '.join(_BUILDERS)}") from None
    return builder() if T is None else builder(T)


def catalog() -> list[dict]:
    return [get_scenario(k).schema() for k in _BUILDERS]
