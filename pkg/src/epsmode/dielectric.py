"""Dielectric profiles, seeded disorder and the perturbation potential.

A :class:`DielectricProfile` is a strictly positive, real, band-limited
scalar field.  Besides being a field it acts as an operator: ``multiply`` is
the dealiased product ``eps * f`` and ``divide`` is its exact inverse (a
solve with the dense convolution matrix), so ``eps.multiply(eps.divide(f))``
returns ``f`` to rounding error.

The disorder model (filtered Gaussian noise) is a stand-in chosen for
reproducibility; nothing here depends on its statistics beyond the seed,
rms amplitude and correlation lengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .geometry import (
    Grid,
    ScalarField,
    VectorField,
    _check_same_grid,
    band_limit_of,
    convolution_matrix,
    dealiased_product,
    from_coefficients,
    low_pass,
    to_coefficients,
)

DEFAULT_EPS_MIN = 0.05
# Above this many grid points the convolution matrix is not factorised densely.
DENSE_LIMIT = 2048


class ProfileError(ValueError):
    """Invalid dielectric profile (too small, not band-limited, ...)."""


class DisorderError(ValueError):
    """Disorder realisation could not satisfy its constraints."""


@dataclass(frozen=True, eq=False)
class DielectricProfile(ScalarField):
    eps_min: float = DEFAULT_EPS_MIN
    band_limit: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        values = np.asarray(self.values)
        if np.iscomplexobj(values):
            if np.max(np.abs(values.imag)) > 1e-12 * max(1.0, np.max(np.abs(values.real))):
                raise ProfileError("dielectric profile must be real")
            values = values.real
        values = np.ascontiguousarray(values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "band_limit", tuple(int(b) for b in self.band_limit))
        super().__post_init__()
        if not np.all(np.isfinite(values)):
            raise ProfileError("dielectric profile has non-finite entries")
        if self.eps_min <= 0:
            raise ProfileError("eps_min must be positive")
        if values.min() < self.eps_min:
            raise ProfileError(f"profile minimum {values.min():.6g} below eps_min {self.eps_min}")
        limit = self.grid.max_band_limit()
        if any(b < 0 or b > lim for b, lim in zip(self.band_limit, limit)):
            raise ProfileError(f"band limit {self.band_limit} exceeds N/3 = {limit}")
        support = band_limit_of(values, self.grid, rtol=1e-11)
        if any(s > b for s, b in zip(support, self.band_limit)):
            raise ProfileError(f"profile has Fourier support {support} beyond band limit {self.band_limit}")

    @classmethod
    def homogeneous(cls, grid: Grid, value: float, eps_min: float = DEFAULT_EPS_MIN) -> "DielectricProfile":
        return cls(grid, np.full(grid.dims, float(value)), eps_min, grid.max_band_limit())

    @property
    def is_homogeneous(self) -> bool:
        return bool(np.ptp(self.values) == 0.0)

    def multiply(self, field: VectorField) -> VectorField:
        return dealiased_product(self, field)

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense convolution matrix acting on one Cartesian component."""
        return convolution_matrix(self.values, self.grid, self.band_limit)

    @cached_property
    def _cholesky(self):
        try:
            return scipy.linalg.cho_factor(self.matrix, lower=False, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise ProfileError(
                "convolution matrix is not positive definite; the profile is not "
                "resolved by its band limit"
            ) from exc

    @cached_property
    def inverse_matrix(self) -> np.ndarray:
        return scipy.linalg.cho_solve(self._cholesky, np.eye(self.grid.n_total, dtype=complex))

    def divide(self, field: VectorField) -> VectorField:
        """Solve ``eps * x = field`` for ``x`` (inverse of :meth:`multiply`)."""
        _check_same_grid(self, field)
        grid = self.grid
        coeffs = to_coefficients(field).reshape(3, -1)
        if grid.n_total <= DENSE_LIMIT:
            solved = scipy.linalg.cho_solve(self._cholesky, coeffs.T, check_finite=False).T
            return VectorField(grid, from_coefficients(grid, solved.reshape(grid.vector_shape)))
        return self._divide_iterative(field)

    def _divide_iterative(self, field: VectorField) -> VectorField:
        grid = self.grid
        n = grid.n_total

        def matvec(x):
            comp = VectorField(grid, np.stack([x.reshape(grid.dims), np.zeros(grid.dims), np.zeros(grid.dims)]))
            return self.multiply(comp).values[0].reshape(-1)

        op = scipy.sparse.linalg.LinearOperator((n, n), matvec=matvec, dtype=complex)
        inv = (1.0 / self.values).reshape(-1)
        pre = scipy.sparse.linalg.LinearOperator((n, n), matvec=lambda x: inv * x, dtype=complex)
        out = np.empty(grid.vector_shape, dtype=complex)
        for c in range(3):
            rhs = field.values[c].reshape(-1)
            sol, info = scipy.sparse.linalg.cg(op, rhs, x0=inv * rhs, M=pre, rtol=1e-14, atol=0.0, maxiter=2000)
            if info != 0:
                raise ProfileError(f"iterative division did not converge (info={info})")
            out[c] = sol.reshape(grid.dims)
        return VectorField(grid, out)


# -- profile construction ---------------------------------------------------

@dataclass(frozen=True)
class Homogeneous:
    value: float


@dataclass(frozen=True)
class Layered:
    """Piecewise-constant layers along one axis with tanh-smoothed interfaces.

    ``values[0]`` occupies ``[0, interfaces[0])``, ``values[i]`` occupies
    ``[interfaces[i-1], interfaces[i])`` and the last layer runs to the box
    edge.  The box is periodic, so the last layer meets the first at 0.
    """

    values: Sequence[float]
    interfaces: Sequence[float]
    width: float
    axis: int = 2


@dataclass(frozen=True)
class Explicit:
    samples: np.ndarray


ProfileSpec = Union[Homogeneous, Layered, Explicit]


def _periodic_window(x: np.ndarray, lo: float, hi: float, width: float, period: float) -> np.ndarray:
    out = np.zeros_like(x)
    for n in range(-2, 3):
        shift = n * period
        out += 0.5 * (np.tanh((x - lo + shift) / width) - np.tanh((x - hi + shift) / width))
    return out


def layered_samples(grid: Grid, spec: Layered) -> np.ndarray:
    """Unfiltered tanh-ramp samples of a layered profile."""
    if len(spec.values) != len(spec.interfaces) + 1:
        raise ProfileError("layered profile needs one more value than interfaces")
    if spec.width <= 0:
        raise ProfileError("smoothing width must be positive")
    period = grid.lengths[spec.axis]
    edges = [0.0, *map(float, spec.interfaces), period]
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise ProfileError("interfaces must be strictly increasing inside the box")
    x = grid.coordinates()[spec.axis]
    out = np.zeros(grid.dims)
    for value, lo, hi in zip(spec.values, edges, edges[1:]):
        out += float(value) * _periodic_window(x, lo, hi, spec.width, period)
    return out


def build_profile(
    grid: Grid,
    spec: ProfileSpec,
    band_limit: Optional[Sequence[int]] = None,
    eps_min: float = DEFAULT_EPS_MIN,
) -> DielectricProfile:
    """Realise a profile description on ``grid``, low-passed to ``band_limit``.

    ``band_limit`` defaults to ``N // 3`` per axis, the largest value for which
    the dealiased products stay exact.
    """
    limit = grid.max_band_limit()
    band = limit if band_limit is None else tuple(int(b) for b in band_limit)
    if any(b > lim for b, lim in zip(band, limit)):
        raise ProfileError(f"band limit {band} exceeds N/3 = {limit}")
    if isinstance(spec, Homogeneous):
        samples = np.full(grid.dims, float(spec.value))
    elif isinstance(spec, Layered):
        samples = layered_samples(grid, spec)
    elif isinstance(spec, Explicit):
        samples = np.asarray(spec.samples, dtype=float)
        if samples.shape != grid.dims:
            raise ProfileError(f"explicit samples have shape {samples.shape}, expected {grid.dims}")
    else:
        raise TypeError(f"unknown profile spec {spec!r}")
    filtered = low_pass(samples, grid, band)
    if filtered.min() < eps_min:
        raise ProfileError(f"filtered profile minimum {filtered.min():.6g} below eps_min {eps_min}")
    return DielectricProfile(grid, filtered, eps_min, band)


# -- disorder ---------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    """Axis-aligned box ``[lower, upper)`` with tanh edges of ``edge_width``."""

    lower: tuple[float, float, float]
    upper: tuple[float, float, float]
    edge_width: float

    def mask(self, grid: Grid) -> np.ndarray:
        coords = grid.coordinates()
        out = np.ones(grid.dims)
        for axis in range(3):
            lo, hi = self.lower[axis], self.upper[axis]
            if lo <= 0.0 and hi >= grid.lengths[axis]:
                continue
            out *= _periodic_window(coords[axis], lo, hi, self.edge_width, grid.lengths[axis])
        return out


@dataclass(frozen=True)
class DisorderSpec:
    seed: int
    rms_amplitude: float
    correlation_length: Union[float, tuple[float, float, float]] = 0.5
    region: Optional[Region] = field(default=None)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.rms_amplitude < 0:
            raise ValueError("rms_amplitude must be non-negative")
        lengths = np.broadcast_to(np.asarray(self.correlation_length, dtype=float), (3,))
        if np.any(lengths <= 0):
            raise ValueError("correlation lengths must be positive")

    @property
    def correlation_lengths(self) -> tuple[float, float, float]:
        return tuple(np.broadcast_to(np.asarray(self.correlation_length, dtype=float), (3,)))


def _weighted_rms(values: np.ndarray, weight: np.ndarray) -> float:
    return float(np.sqrt(np.sum(weight * values**2) / np.sum(weight)))


def disorder_shape(grid: Grid, spec: DisorderSpec, band_limit: tuple[int, int, int]) -> np.ndarray:
    """Unit-rms disorder pattern for ``spec`` (before clipping)."""
    rng = np.random.default_rng(int(spec.seed))
    noise = rng.standard_normal(grid.dims)
    kernel = np.ones(grid.dims)
    for k, ell in zip(grid.wavevector, spec.correlation_lengths):
        kernel = kernel * np.exp(-0.5 * (k * ell) ** 2)
    smooth = np.fft.ifftn(np.fft.fftn(noise) * kernel).real
    smooth = low_pass(smooth, grid, band_limit)
    weight = np.ones(grid.dims)
    if spec.region is not None:
        weight = spec.region.mask(grid)
        smooth = low_pass(smooth * weight, grid, band_limit)
    rms = _weighted_rms(smooth, weight)
    if rms == 0.0:
        raise DisorderError("band limit leaves no room for disorder on this grid")
    return smooth / rms


def generate_disorder(base: DielectricProfile, spec: DisorderSpec) -> DielectricProfile:
    """Return the disordered profile ``base + delta_eps`` for one realisation."""
    grid = base.grid
    if spec.rms_amplitude == 0.0:
        return DielectricProfile(grid, base.values.copy(), base.eps_min, base.band_limit)
    weight = np.ones(grid.dims) if spec.region is None else spec.region.mask(grid)
    target = float(spec.rms_amplitude)
    delta = target * disorder_shape(grid, spec, base.band_limit)
    eps = base.values + delta
    if eps.min() < base.eps_min:
        clipped = np.maximum(eps, base.eps_min) - base.values
        relaxed = low_pass(clipped, grid, base.band_limit)
        achieved = _weighted_rms(relaxed, weight)
        if abs(achieved - target) > 0.2 * target:
            raise DisorderError(
                f"clipping at eps_min changes the rms from {target:.4g} to {achieved:.4g}"
            )
        delta = relaxed * (target / achieved)
        eps = base.values + delta
        if eps.min() < base.eps_min:
            raise DisorderError("disorder still violates eps_min after relaxation")
    return DielectricProfile(grid, eps, base.eps_min, base.band_limit)


# -- perturbation potential -------------------------------------------------

@dataclass(frozen=True, eq=False)
class PerturbationPotential:
    """Isotropic potential ``-delta_eps * omega**2`` times the unit tensor."""

    delta_eps: ScalarField
    omega: float

    @property
    def grid(self) -> Grid:
        return self.delta_eps.grid

    @property
    def values(self) -> np.ndarray:
        return -self.delta_eps.values * self.omega**2

    def apply(self, field: VectorField) -> VectorField:
        return dealiased_product(self.delta_eps, field) * (-self.omega**2)


def perturbation_potential(eps_i: DielectricProfile, eps_ii: DielectricProfile, omega: float) -> PerturbationPotential:
    _check_same_grid(eps_i, eps_ii)
    if omega < 0:
        raise ValueError("omega must be non-negative")
    return PerturbationPotential(ScalarField(eps_i.grid, eps_ii.values - eps_i.values), float(omega))
