"""Empty-cavity local-field factor from the two scattering formulations.

For a small empty cavity in a homogeneous dielectric only the local parts
of the kernels survive.  The standard kernel gives the fixed point

    L = 1 + (eps - 1) L / (3 eps)

and the gauge-respecting kernel gives

    L = eps - 2 (eps - 1) L / 3

Both are solved by ``L = 3 eps / (2 eps + 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROUTES = ("closed", "fixed-point-G", "fixed-point-K")
TOL = 1e-14
MAX_ITER = 200


@dataclass(frozen=True)
class LocalFieldResult:
    eps: float
    factor: float
    route: str
    iterations: int
    method: str

    @property
    def emission_factor(self) -> float:
        return self.factor**2 * np.sqrt(self.eps)


def _iterate(update, start: float = 1.0) -> tuple[float, int, bool]:
    value = start
    for n in range(1, MAX_ITER + 1):
        nxt = update(value)
        if not np.isfinite(nxt):
            return value, n, False
        if abs(nxt - value) < TOL:
            return nxt, n, True
        value = nxt
    return value, MAX_ITER, False


def local_field_factor(eps: float, route: str = "closed") -> LocalFieldResult:
    """Local-field factor of an empty cavity in a medium of permittivity ``eps``.

    The K-route map has slope ``-2 (eps - 1) / 3``; once that reaches 1 in
    magnitude the iteration cannot converge and the linear relation is
    solved directly, which is recorded in ``method``.
    """
    eps = float(eps)
    if not eps >= 1.0:
        raise ValueError(f"eps must be >= 1, got {eps}")
    if route == "closed":
        return LocalFieldResult(eps, 3 * eps / (2 * eps + 1), route, 0, "closed form")
    if route == "fixed-point-G":
        value, n, ok = _iterate(lambda v: 1 + (eps - 1) * v / (3 * eps))
        if not ok:
            raise ArithmeticError(f"G-route iteration did not converge for eps = {eps}")
        return LocalFieldResult(eps, value, route, n, "iteration")
    if route == "fixed-point-K":
        slope = 2 * (eps - 1) / 3
        reason = "iteration diverges"
        if slope < 1:
            value, n, ok = _iterate(lambda v: eps - slope * v)
            if ok:
                return LocalFieldResult(eps, value, route, n, "iteration")
            reason = f"iteration not converged in {MAX_ITER} steps"
        return LocalFieldResult(eps, eps / (1 + slope), route, 0, f"linear solve ({reason})")
    raise ValueError(f"route must be one of {ROUTES}")


def emission_enhancement(eps: float) -> float:
    """Spontaneous-emission rate in the cavity relative to free space, ``L**2 sqrt(eps)``."""
    eps = float(eps)
    if not eps >= 1.0:
        raise ValueError(f"eps must be >= 1, got {eps}")
    return (3 * eps / (2 * eps + 1)) ** 2 * np.sqrt(eps)
