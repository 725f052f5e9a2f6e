"""Per-mode gauge transformation into the eps_II-transverse gauge.

A mode ``f_I`` of the ideal profile is eps_I-transverse but, in general, not
eps_II-transverse.  Adding the gradient

    grad chi = G^L_II(w) V(w) f_I = -delta_eps f_I / eps_II + sum_mu f_mu <f_mu, delta_eps f_I>

restores ``div(eps_II (f_I + grad chi)) = 0`` without changing the magnetic
field.  The frequency cancels between ``V`` and ``G^L_II``; it is kept only as
metadata.  The sum runs over the full medium-II mode set, whose completeness
is what makes the result curl-free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dielectric import DielectricProfile, perturbation_potential
from .geometry import (
    ScalarField,
    VectorField,
    _check_same_grid,
    curl,
    dealiased_product,
    divergence,
    gradient,
)
from .green import apply_kernel, kernel
from .modes import ModeSet, polarization_basis


@dataclass(frozen=True, eq=False)
class GaugeTerm:
    """``grad chi`` for one mode, with the periodic potential ``chi``.

    A gradient on a periodic box may carry a uniform part that no periodic
    ``chi`` produces; it is kept separately in ``uniform`` so that
    ``grad(chi) + uniform`` reproduces ``gradient``.
    """

    label: int
    gradient: VectorField
    chi: ScalarField
    uniform: np.ndarray
    omega: float

    @property
    def curl_residual(self) -> float:
        """``||curl grad chi|| / ||grad chi||`` (0 for a vanishing term)."""
        size = self.gradient.norm()
        return curl(self.gradient).norm() / size if size > 0 else 0.0

    def regradient(self) -> VectorField:
        uniform = np.broadcast_to(self.uniform[:, None, None, None], self.gradient.values.shape)
        return gradient(self.chi) + VectorField(self.gradient.grid, uniform.astype(complex))

    @property
    def regradient_residual(self) -> float:
        size = self.gradient.norm()
        diff = (self.regradient() - self.gradient).norm()
        return diff / size if size > 0 else diff


def potential_from_gradient(g: VectorField) -> tuple[ScalarField, np.ndarray]:
    """Zero-mean ``chi`` with ``chi_k = -i k.g_k / |k|**2`` and the uniform part of ``g``."""
    grid = g.grid
    spec = np.fft.fftn(g.values, axes=(-3, -2, -1))
    k = grid.wavevector
    k2 = grid.k_squared
    kdotg = sum(k[c] * spec[c] for c in range(3))
    chi_k = np.zeros(grid.dims, dtype=complex)
    nz = k2 > 0
    chi_k[nz] = -1j * kdotg[nz] / k2[nz]
    uniform = spec[:, 0, 0, 0] / grid.n_total
    return ScalarField(grid, np.fft.ifftn(chi_k)), uniform


def gauge_gradient(
    modes_ii: ModeSet,
    eps_ii: DielectricProfile,
    eps_i: DielectricProfile,
    f_i: VectorField,
    omega: float,
    label: int = -1,
) -> GaugeTerm:
    """``G^L_II(omega) V(omega) f_i`` together with its potential."""
    _check_same_grid(modes_ii.eps, eps_ii, eps_i, f_i)
    if not np.array_equal(modes_ii.eps.values, eps_ii.values):
        raise ValueError("mode set does not belong to eps_II")
    potential = perturbation_potential(eps_i, eps_ii, omega)
    g = apply_kernel(kernel(modes_ii, omega, "G_L"), potential.apply(f_i))
    chi, uniform = potential_from_gradient(g)
    return GaugeTerm(int(label), g, chi, uniform, float(omega))


def zero_gauge_term(f_i: VectorField, label: int = -1, omega: float = 0.0) -> GaugeTerm:
    grid = f_i.grid
    return GaugeTerm(
        int(label),
        VectorField.zeros(grid),
        ScalarField(grid, np.zeros(grid.dims, dtype=complex)),
        np.zeros(3, dtype=complex),
        float(omega),
    )


def verify_gauge_condition(eps_ii: DielectricProfile, f_i: VectorField, term: GaugeTerm) -> float:
    """``||div(eps_II (f_i + grad chi))|| / ||f_i + grad chi||``."""
    a = f_i + term.gradient
    return divergence(a, eps_ii).norm() / a.norm()


def _check_wave_index(grid, index: Sequence[int]) -> np.ndarray:
    m = np.asarray(index, dtype=int)
    if m.shape != (3,):
        raise ValueError("wave index must have three integer components")
    if not np.any(m):
        raise ValueError("plane wave needs a nonzero wave vector")
    for c in range(3):
        if 2 * abs(m[c]) >= grid.dims[c] and m[c] != 0:
            raise ValueError(f"wave index {tuple(m)} is not resolved by grid {grid.dims}")
    return m


def plane_wave(grid, index: Sequence[int], sigma: int) -> tuple[VectorField, float]:
    """Unit-amplitude ``exp(i k.r) e_sigma`` and ``|k|`` for integer wave index ``index``."""
    m = _check_wave_index(grid, index)
    if sigma not in (1, 2):
        raise ValueError("sigma must be 1 or 2")
    k = 2.0 * np.pi * m / np.asarray(grid.lengths)
    e = polarization_basis(k)[sigma - 1][0]
    x, y, z = grid.coordinates()
    phase = np.exp(1j * (k[0] * x + k[1] * y + k[2] * z))
    values = np.stack([e[c] * phase for c in range(3)])
    return VectorField(grid, values), float(np.linalg.norm(k))


def plane_wave_gauge_profile(
    eps_ii: DielectricProfile, modes_ii: ModeSet, index: Sequence[int], sigma: int
) -> VectorField:
    """Gauge-corrected plane wave in a medium with ``eps_I = 1``.

    Closed form ``p / eps_II + sum_mu f_mu <f_mu, (eps_II - 1) p>`` with
    ``p = exp(i k.r) e_sigma``.
    """
    _check_same_grid(modes_ii.eps, eps_ii)
    p, _ = plane_wave(eps_ii.grid, index, sigma)
    contrast = ScalarField(eps_ii.grid, eps_ii.values - 1.0)
    mat = modes_ii.matrix
    overlaps = modes_ii.grid.cell_volume * (mat.conj() @ dealiased_product(contrast, p).flat)
    return eps_ii.divide(p) + VectorField.from_flat(eps_ii.grid, overlaps @ mat)


@dataclass(frozen=True, eq=False)
class FieldProfiles:
    """Spatial profiles of one mode in the eps_II-transverse gauge."""

    vector_potential: VectorField
    electric: VectorField
    magnetic: VectorField
    displacement: VectorField
    gauge_curl: float
    displacement_divergence: float


def assemble_field_profiles(f_i: VectorField, term: GaugeTerm, eps_ii: DielectricProfile) -> FieldProfiles:
    """A, E, B and D profiles; the gauge term drops out of B."""
    a = f_i + term.gradient
    b = curl(f_i)
    d = eps_ii.multiply(a)
    gauge_curl = (curl(a) - b).norm()
    div_d = divergence(d).norm() / d.norm()
    return FieldProfiles(a, a, b, d, gauge_curl, div_d)
