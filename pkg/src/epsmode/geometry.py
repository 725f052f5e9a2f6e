"""Periodic box, grid-aware fields and Fourier-spectral operators.

All fields live on a uniform periodic grid of ``dims = (Nx, Ny, Nz)`` points
spanning a box of side ``lengths = (Lx, Ly, Lz)``.  Values are stored in C
order with shape ``(Nx, Ny, Nz)`` for scalars and ``(3, Nx, Ny, Nz)`` for
vectors, so the z index runs fastest and the Cartesian component is the
slowest (leading) axis.

Derivatives are spectral.  Wave numbers follow ``numpy.fft.fftfreq``, which
places the Nyquist mode of an even axis at ``-N/2``; axes with a single point
carry zero wave number.  Every identity that is algebraic in ``k`` (curl of a
gradient, divergence of a curl) therefore holds to rounding error.

Pointwise products with dielectric-like factors are dealiased: the two
factors are zero-padded to a ``3N/2`` grid, multiplied, and truncated back.
For a factor band-limited to ``N/3`` this is exactly the truncated Fourier
convolution, the same operator as :func:`convolution_matrix`.

Natural units are used throughout (c = eps0 = mu0 = 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Union

import numpy as np

_AXES = (-3, -2, -1)


class GridMismatchError(ValueError):
    """Raised when fields defined on different grids are combined."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on a rectangular box."""

    dims: tuple[int, int, int]
    lengths: tuple[float, float, float]

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        lengths = tuple(float(x) for x in self.lengths)
        if len(dims) != 3 or len(lengths) != 3:
            raise ValueError("dims and lengths must both have three entries")
        if any(n < 1 for n in dims):
            raise ValueError(f"all dims must be >= 1, got {dims}")
        if any(not np.isfinite(x) or x <= 0 for x in lengths):
            raise ValueError(f"all lengths must be positive, got {lengths}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "lengths", lengths)

    @property
    def n_total(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def volume(self) -> float:
        return self.lengths[0] * self.lengths[1] * self.lengths[2]

    @property
    def cell_volume(self) -> float:
        return self.volume / self.n_total

    @property
    def vector_shape(self) -> tuple[int, int, int, int]:
        return (3,) + self.dims

    @cached_property
    def mode_indices(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Signed integer Fourier index per axis, in FFT order."""
        return tuple(
            np.rint(np.fft.fftfreq(n, d=1.0 / n)).astype(np.int64) for n in self.dims
        )

    @cached_property
    def wavevector(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-axis wave numbers ``2 pi m / L`` broadcastable to ``dims``."""
        out = []
        for axis, (m, length) in enumerate(zip(self.mode_indices, self.lengths)):
            shape = [1, 1, 1]
            shape[axis] = m.size
            out.append((2.0 * np.pi / length) * m.reshape(shape).astype(float))
        return tuple(out)

    @cached_property
    def k_squared(self) -> np.ndarray:
        kx, ky, kz = self.wavevector
        return kx**2 + ky**2 + kz**2

    @cached_property
    def padded_dims(self) -> tuple[int, int, int]:
        return tuple(max(n, (3 * n + 1) // 2) if n > 1 else 1 for n in self.dims)

    def max_band_limit(self) -> tuple[int, int, int]:
        """Largest per-axis band limit for which dealiasing is exact."""
        return tuple(n // 3 for n in self.dims)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        axes = [np.arange(n) * (length / n) for n, length in zip(self.dims, self.lengths)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def flat_mode_indices(self) -> np.ndarray:
        """``(n_total, 3)`` array of signed Fourier indices in flattened FFT order."""
        mx, my, mz = np.meshgrid(*self.mode_indices, indexing="ij")
        return np.stack([mx.ravel(), my.ravel(), mz.ravel()], axis=1)


def _check_same_grid(*items):
    grids = [item.grid for item in items if item is not None]
    for g in grids[1:]:
        if g != grids[0]:
            raise GridMismatchError(f"fields live on different grids: {grids[0]} vs {g}")


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != self.grid.dims:
            raise ValueError(f"scalar values have shape {values.shape}, expected {self.grid.dims}")
        object.__setattr__(self, "values", values)

    def norm(self) -> float:
        return float(np.sqrt(self.grid.cell_volume * np.sum(np.abs(self.values) ** 2)))

    def __add__(self, other):
        _check_same_grid(self, other)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return ScalarField(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Complex three-component field on a periodic grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.vector_shape:
            raise ValueError(
                f"vector values have shape {values.shape}, expected {self.grid.vector_shape}"
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros(grid.vector_shape, dtype=complex))

    @classmethod
    def from_flat(cls, grid: Grid, flat: np.ndarray) -> "VectorField":
        return cls(grid, np.asarray(flat).reshape(grid.vector_shape))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def norm(self) -> float:
        return float(np.sqrt(self.grid.cell_volume * np.sum(np.abs(self.values) ** 2)))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def __add__(self, other):
        _check_same_grid(self, other)
        return VectorField(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return VectorField(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return VectorField(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return VectorField(self.grid, self.values / scalar)

    def __neg__(self):
        return VectorField(self.grid, -self.values)


Field = Union[ScalarField, VectorField]


def random_vector_field(grid: Grid, seed: int) -> VectorField:
    """Deterministic complex Gaussian field, unit norm."""
    rng = np.random.default_rng(seed)
    values = rng.standard_normal(grid.vector_shape) + 1j * rng.standard_normal(grid.vector_shape)
    field = VectorField(grid, values)
    return field / field.norm()


# -- Fourier transforms -----------------------------------------------------

def to_coefficients(field: Field) -> np.ndarray:
    """Fourier coefficients scaled so that Euclidean norms equal field norms."""
    scale = np.sqrt(field.grid.cell_volume)
    return scale * np.fft.fftn(field.values, axes=_AXES, norm="ortho")


def from_coefficients(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(coeffs, axes=_AXES, norm="ortho") / np.sqrt(grid.cell_volume)


def _spectral(values: np.ndarray) -> np.ndarray:
    return np.fft.fftn(values, axes=_AXES)


def _physical(spectrum: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(spectrum, axes=_AXES)


# -- differential operators -------------------------------------------------

def gradient(scalar: ScalarField) -> VectorField:
    grid = scalar.grid
    s = _spectral(scalar.values)
    comps = [_physical(1j * k * s) for k in grid.wavevector]
    return VectorField(grid, np.stack(comps))


def divergence(field: VectorField, weight: Optional[ScalarField] = None) -> ScalarField:
    """Spectral divergence of ``weight * field`` (dealiased product)."""
    _check_same_grid(field, weight)
    grid = field.grid
    if weight is not None:
        field = dealiased_product(weight, field)
    spec = _spectral(field.values)
    kx, ky, kz = grid.wavevector
    div = 1j * (kx * spec[0] + ky * spec[1] + kz * spec[2])
    return ScalarField(grid, _physical(div))


def curl(field: VectorField) -> VectorField:
    grid = field.grid
    a = _spectral(field.values)
    kx, ky, kz = grid.wavevector
    out = np.stack(
        [
            1j * (ky * a[2] - kz * a[1]),
            1j * (kz * a[0] - kx * a[2]),
            1j * (kx * a[1] - ky * a[0]),
        ]
    )
    return VectorField(grid, _physical(out))


def curl_curl(field: VectorField) -> VectorField:
    """``curl(curl(field))`` evaluated in one spectral pass."""
    grid = field.grid
    a = _spectral(field.values)
    k = grid.wavevector
    k_dot_a = k[0] * a[0] + k[1] * a[1] + k[2] * a[2]
    out = np.stack([grid.k_squared * a[i] - k[i] * k_dot_a for i in range(3)])
    return VectorField(grid, _physical(out))


def laplacian(scalar: ScalarField) -> ScalarField:
    grid = scalar.grid
    return ScalarField(grid, _physical(-grid.k_squared * _spectral(scalar.values)))


def weighted_inner_product(
    a: VectorField, b: VectorField, weight: Optional[ScalarField] = None
) -> complex:
    """``dV * sum conj(a) * (weight b)``, conjugate-linear in ``a``.

    The weighted product is the dealiased one, so the result is Hermitian
    in ``(a, b)`` and equals the continuum integral for band-limited weights.
    """
    _check_same_grid(a, b, weight)
    if weight is not None:
        b = dealiased_product(weight, b)
    return complex(a.grid.cell_volume * np.vdot(a.values, b.values))


# -- dealiased products -----------------------------------------------------

def _embed(spectrum: np.ndarray, grid: Grid, target: tuple[int, int, int]) -> np.ndarray:
    out = np.zeros(spectrum.shape[:-3] + target, dtype=complex)
    index = np.ix_(*[m % t for m, t in zip(grid.mode_indices, target)])
    out[(Ellipsis,) + index] = spectrum
    return out


def _restrict(spectrum: np.ndarray, grid: Grid) -> np.ndarray:
    padded = spectrum.shape[-3:]
    index = np.ix_(*[m % t for m, t in zip(grid.mode_indices, padded)])
    return spectrum[(Ellipsis,) + index]


def dealiased_product(a: ScalarField, b: Field) -> Field:
    """Pointwise product ``a * b`` evaluated with 3/2 zero padding.

    Exact (equal to the truncated convolution of the two spectra) whenever
    ``a`` is band-limited to ``N/3`` per axis.
    """
    _check_same_grid(a, b)
    grid = b.grid
    n_tot = grid.n_total
    padded = grid.padded_dims
    m_tot = padded[0] * padded[1] * padded[2]
    a_pad = _physical(_embed(_spectral(a.values) / n_tot, grid, padded)) * m_tot
    b_pad = _physical(_embed(_spectral(b.values) / n_tot, grid, padded)) * m_tot
    product = _spectral(a_pad * b_pad) / m_tot
    values = _physical(_restrict(product, grid)) * n_tot
    if isinstance(b, VectorField):
        return VectorField(grid, values)
    return ScalarField(grid, values)


def band_limit_of(values: np.ndarray, grid: Grid, rtol: float = 1e-13) -> tuple[int, int, int]:
    """Largest |m| per axis carrying spectral weight above ``rtol``."""
    spec = np.abs(_spectral(values))
    cutoff = rtol * max(float(spec.max()), np.finfo(float).tiny)
    out = []
    for axis, m in enumerate(grid.mode_indices):
        other = tuple(i for i in range(3) if i != axis)
        present = spec.max(axis=other) > cutoff
        out.append(int(np.abs(m[present]).max()) if present.any() else 0)
    return tuple(out)


def low_pass(values: np.ndarray, grid: Grid, band_limit: tuple[int, int, int]) -> np.ndarray:
    """Zero every Fourier mode with ``|m_axis| > band_limit[axis]``."""
    spec = _spectral(values)
    mx, my, mz = np.meshgrid(*grid.mode_indices, indexing="ij")
    keep = (np.abs(mx) <= band_limit[0]) & (np.abs(my) <= band_limit[1]) & (np.abs(mz) <= band_limit[2])
    out = _physical(spec * keep)
    return out.real if np.isrealobj(values) else out


def convolution_matrix(values: np.ndarray, grid: Grid, band_limit: tuple[int, int, int]) -> np.ndarray:
    """Dense matrix of multiplication by a band-limited scalar.

    Acts on coefficient vectors from :func:`to_coefficients` (one component,
    flattened); entry ``(i, j)`` is the mean-normalised coefficient of the
    scalar at index difference ``m_i - m_j``.
    """
    coeffs = _spectral(values) / grid.n_total
    m = grid.flat_mode_indices()
    diff = m[:, None, :] - m[None, :, :]
    inside = np.all(np.abs(diff) <= np.asarray(band_limit), axis=-1)
    dims = np.asarray(grid.dims)
    wrapped = diff % dims
    mat = coeffs[wrapped[..., 0], wrapped[..., 1], wrapped[..., 2]]
    return np.where(inside, mat, 0.0)
