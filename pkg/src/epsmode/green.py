"""Mode-sum Green kernels of the ideal medium and the generalized Helmholtz split.

With eps-orthonormal modes ``f_l`` and plain overlaps ``<f_l, v>``::

    G_T v = sum_l f_l <f_l, v> / ((w + i eta)**2 - w_l**2)
    G_L v = v / (eps w**2) - sum_l f_l <f_l, v> / w**2
    K   v = sum_l (w_l / w)**2 f_l <f_l, v> / ((w + i eta)**2 - w_l**2)
    G   v = K v + v / (eps w**2)

The discrete delta function is ``delta_rr' / dV``, so the local term is a
division by eps; it is the inverse of the dealiased product, which is what
makes ``G_L`` exactly curl-free.  Kernels are applied as sums over modes
and never stored as dense matrices (except in :func:`direct_inverse_apply`,
which is the independent reference).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .dielectric import DielectricProfile
from .geometry import (
    ScalarField,
    VectorField,
    _check_same_grid,
    curl_curl,
    divergence,
    from_coefficients,
    gradient,
    random_vector_field,
    to_coefficients,
)
from .modes import ModeSet, maxwell_matrices

KINDS = ("G_T", "G_L", "K", "G")
DEFAULT_RESONANCE_TOL = 1e-8
IDENTITY_PROBES = 16
IDENTITY_SEED = 20110


class ResonanceError(ValueError):
    """Probe frequency too close to a mode that is not excluded."""


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralKernel:
    """Mode-sum representation of one kernel at probe frequency ``omega``.

    ``exclude`` removes modes from the resonant sums (``G_T``, ``K`` and the
    ``K`` part of ``G``), giving the reduced kernels used for on-resonance
    perturbation theory.  The completeness sum in ``G_L`` always runs over
    every mode.
    """

    modes: ModeSet
    omega: float
    kind: str
    eta: float = 0.0
    exclude: tuple[int, ...] = ()
    resonance_tol: float = DEFAULT_RESONANCE_TOL

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.omega < 0 or self.eta < 0:
            raise ValueError("omega and eta must be non-negative")
        if self.omega == 0 and self.kind != "G_T":
            raise ValueError(f"kernel {self.kind} is singular at omega = 0")
        object.__setattr__(self, "exclude", tuple(sorted(int(i) for i in self.exclude)))
        if self.eta == 0 and self.kind != "G_L":
            active = self.active
            if active.any():
                gap = np.abs(self.modes.omegas[active] - self.omega).min()
                if gap <= self.resonance_tol:
                    raise ResonanceError(
                        f"omega = {self.omega!r} lies within {gap:.3g} of a non-excluded mode"
                    )

    @cached_property
    def active(self) -> np.ndarray:
        mask = np.ones(len(self.modes), dtype=bool)
        mask[list(self.exclude)] = False
        return mask

    @cached_property
    def weights(self) -> np.ndarray:
        """Per-mode coefficient of ``f_l <f_l, v>`` in the resonant sum."""
        wl2 = self.modes.omegas**2
        denom = (self.omega + 1j * self.eta) ** 2 - wl2
        out = np.zeros(len(self.modes), dtype=complex)
        act = self.active
        if self.kind == "G_T":
            out[act] = 1.0 / denom[act]
        elif self.kind in ("K", "G"):
            out[act] = (wl2[act] / self.omega**2) / denom[act]
        else:
            out[:] = -1.0 / self.omega**2
        return out


def _mode_sum(modes: ModeSet, weights: np.ndarray, source: VectorField) -> VectorField:
    mat = modes.matrix
    overlaps = modes.grid.cell_volume * (mat.conj() @ source.flat)
    return VectorField.from_flat(modes.grid, (weights * overlaps) @ mat)


def apply_kernel(kernel: SpectralKernel, source: VectorField) -> VectorField:
    modes = kernel.modes
    _check_same_grid(modes.eps, source)
    out = _mode_sum(modes, kernel.weights, source)
    if kernel.kind in ("G_L", "G"):
        out = out + modes.eps.divide(source) / kernel.omega**2
    return out


def kernel(modes: ModeSet, omega: float, kind: str, **kwargs) -> SpectralKernel:
    return SpectralKernel(modes, float(omega), kind, **kwargs)


def kernel_identity_residual(
    modes: ModeSet,
    eps: DielectricProfile,
    omega: float,
    probes: int = IDENTITY_PROBES,
    seed: int = IDENTITY_SEED,
) -> float:
    """Worst ``||(G - K) v - v / (eps w**2)|| / ||v||`` over fixed random probes.

    ``G`` is evaluated as ``G_T + G_L`` from their own expansions, so the
    check exercises the transverse/longitudinal split against ``K``.
    """
    if eps is not modes.eps:
        _check_same_grid(eps, modes.eps)
        if not np.array_equal(eps.values, modes.eps.values):
            raise ValueError("profile does not match the mode set")
    g_t = kernel(modes, omega, "G_T")
    g_l = kernel(modes, omega, "G_L")
    k_op = kernel(modes, omega, "K")
    worst = 0.0
    for i in range(probes):
        v = random_vector_field(modes.grid, seed + i)
        g_v = apply_kernel(g_t, v) + apply_kernel(g_l, v)
        resid = g_v - apply_kernel(k_op, v) - eps.divide(v) / omega**2
        worst = max(worst, resid.norm() / v.norm())
    return worst


def wave_operator(eps: DielectricProfile, omega: float, field: VectorField) -> VectorField:
    """``-curl curl f + eps omega**2 f``."""
    return eps.multiply(field) * omega**2 - curl_curl(field)


def direct_inverse_apply(eps: DielectricProfile, omega: float, source: VectorField) -> VectorField:
    """Solve ``(-curl curl + eps omega**2) x = source`` with a dense factorisation."""
    _check_same_grid(eps, source)
    grid = eps.grid
    if 3 * grid.n_total > 3072:
        raise ValueError("direct inverse is limited to 3072 unknowns")
    a, b = maxwell_matrices(eps)
    op = omega**2 * b - a
    rhs = to_coefficients(source).reshape(-1)
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            x = scipy.linalg.solve(op, rhs, assume_a="her")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            raise ResonanceError(f"wave operator is singular at omega = {omega!r}") from exc
    return VectorField(grid, from_coefficients(grid, x.reshape(grid.vector_shape)))


# -- generalized Helmholtz decomposition ------------------------------------

def solve_weighted_poisson(
    eps: DielectricProfile, rhs: ScalarField, rtol: float = 1e-11, maxiter: int = 500
) -> ScalarField:
    """Zero-mean ``phi`` with ``div(eps grad phi) = rhs``.

    Preconditioned conjugate gradients; the preconditioner is the inverse
    Laplacian scaled by the mean of eps.
    """
    _check_same_grid(eps, rhs)
    grid = eps.grid
    n = grid.n_total
    k2 = grid.k_squared
    inv_symbol = np.zeros_like(k2)
    inv_symbol[k2 > 0] = 1.0 / (eps.values.mean() * k2[k2 > 0])

    def matvec(x):
        phi = ScalarField(grid, x.reshape(grid.dims))
        return -divergence(gradient(phi), eps).values.reshape(-1)

    def precond(x):
        return np.fft.ifftn(np.fft.fftn(x.reshape(grid.dims)) * inv_symbol).reshape(-1)

    op = scipy.sparse.linalg.LinearOperator((n, n), matvec=matvec, dtype=complex)
    pre = scipy.sparse.linalg.LinearOperator((n, n), matvec=precond, dtype=complex)
    b = -rhs.values.reshape(-1).astype(complex)
    b = b - b.mean()
    if not np.any(b):
        return ScalarField(grid, np.zeros(grid.dims, dtype=complex))
    sol, info = scipy.sparse.linalg.cg(op, b, M=pre, rtol=rtol, atol=0.0, maxiter=maxiter)
    if info != 0:
        raise SolverError(f"weighted Poisson solve did not converge in {maxiter} iterations")
    sol = sol - sol.mean()
    return ScalarField(grid, sol.reshape(grid.dims))


def helmholtz_decompose(field: VectorField, eps: DielectricProfile) -> tuple[VectorField, VectorField]:
    """Split ``field`` into an eps-transverse part and a gradient.

    The longitudinal part is ``grad phi`` with a periodic ``phi``, so the two
    parts are also orthogonal in the eps-weighted inner product.
    """
    _check_same_grid(field, eps)
    phi = solve_weighted_poisson(eps, divergence(field, eps))
    longitudinal = gradient(phi)
    return field - longitudinal, longitudinal


def exclusion_near(modes: ModeSet, omega: float, rel_tol: float) -> tuple[int, ...]:
    """Labels within ``rel_tol * omega`` of ``omega``."""
    return tuple(int(i) for i in np.nonzero(np.abs(modes.omegas - omega) <= rel_tol * omega)[0])


def probe_frequencies(
    modes: ModeSet, count: int, start: int = 0, min_rel_gap: float = 1e-2
) -> Sequence[float]:
    """Mid-gap frequencies, skipping gaps narrower than ``min_rel_gap * omega``.

    Narrow gaps (split degeneracies) would put the probe almost on resonance.
    """
    w = np.unique(np.round(modes.omegas, 12))
    mids = 0.5 * (w[1:] + w[:-1])
    wide = np.diff(w) > min_rel_gap * mids
    return [float(x) for x in mids[wide][start:start + count]]
