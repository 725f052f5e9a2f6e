"""Lippmann-Schwinger equations for the modes of a disordered profile.

Two formulations relate a mode ``f_I`` of the ideal profile ``eps_I`` to a
mode of the realised profile ``eps_II = eps_I + delta_eps``:

``"G"`` (standard)
    ``f = f_I + G_I(w) V(w) f``
``"K"`` (gauge-respecting)
    ``eps_II f = eps_I f_I + eps_I K_I(w) V(w) f``

with ``V(w) = -delta_eps w**2``.  Iterating either from ``V = 0`` gives a
Born series.  Because ``eps_I K_I`` maps into divergence-free fields, every
order of the ``"K"`` series satisfies ``div(eps_II f) = 0``; the ``"G"``
orders do not.

On a finite periodic box the spectrum is discrete.  The driven equations
above are used as Born generators at a chosen probe frequency, while the
exact statement is the homogeneous form ``f_II = G_I(w_II) V(w_II) f_II``
(and its ``K`` counterpart), checked by :func:`homogeneous_ls_residual`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .dielectric import DielectricProfile, perturbation_potential
from .geometry import (
    ScalarField,
    VectorField,
    _check_same_grid,
    curl_curl,
    low_pass,
    weighted_inner_product,
)
from .green import DEFAULT_RESONANCE_TOL, apply_kernel, exclusion_near, kernel
from .modes import ModeSet, transversality_residual

VARIANTS = ("G", "K")
POLICIES = ("fixed", "self-consistent")


@dataclass(frozen=True, eq=False)
class BornOrder:
    """One iterate; ``change`` is measured against the previous order, or ``f_I`` at order 0."""

    order: int
    omega: float
    field: VectorField
    transversality: float
    change: float
    ls_residual: float


@dataclass(eq=False)
class BornTrace:
    variant: str
    label: int
    policy: str
    excluded: tuple[int, ...]
    orders: list[BornOrder] = field(default_factory=list)

    @property
    def transversality(self) -> np.ndarray:
        return np.array([o.transversality for o in self.orders])

    @property
    def changes(self) -> np.ndarray:
        return np.array([o.change for o in self.orders])

    @property
    def ls_residuals(self) -> np.ndarray:
        return np.array([o.ls_residual for o in self.orders])

    @property
    def fields(self) -> list[VectorField]:
        return [o.field for o in self.orders]

    def rows(self) -> list[dict]:
        return [
            {
                "variant": self.variant,
                "label": self.label,
                "policy": self.policy,
                "order": o.order,
                "omega": o.omega,
                "transversality": o.transversality,
                "change": o.change,
                "ls_residual": o.ls_residual,
            }
            for o in self.orders
        ]


def _delta(eps_i: DielectricProfile, eps_ii: DielectricProfile) -> ScalarField:
    _check_same_grid(eps_i, eps_ii)
    return ScalarField(eps_i.grid, eps_ii.values - eps_i.values)


def rayleigh_frequency(f: VectorField, eps: DielectricProfile) -> float:
    """``sqrt(<f, curl curl f> / <f, eps f>)``."""
    num = weighted_inner_product(f, curl_curl(f)).real
    den = weighted_inner_product(f, f, eps).real
    return float(np.sqrt(max(num, 0.0) / den))


def first_order_frequency_shift(modes_i: ModeSet, label: int, delta_eps: ScalarField) -> float:
    """First-order change of ``omega**2``: ``-w_l**2 <f_l, delta_eps f_l>``."""
    f = modes_i.field(label)
    return float(-modes_i.omegas[label] ** 2 * weighted_inner_product(f, f, delta_eps).real)


def _g_step(modes_i, eps_i, eps_ii, f_i, f, omega, exclude, resonance_tol):
    potential = perturbation_potential(eps_i, eps_ii, omega)
    g = kernel(modes_i, omega, "G", exclude=exclude, resonance_tol=resonance_tol)
    return f_i + apply_kernel(g, potential.apply(f))


def _k_rhs(modes_i, eps_i, eps_ii, f_i, f, omega, exclude, resonance_tol):
    """``eps_I f_I + eps_I K V f`` (the right-hand side, a divergence-free field)."""
    potential = perturbation_potential(eps_i, eps_ii, omega)
    k = kernel(modes_i, omega, "K", exclude=exclude, resonance_tol=resonance_tol)
    return eps_i.multiply(f_i + apply_kernel(k, potential.apply(f)))


def born_series(
    variant: str,
    modes_i: ModeSet,
    eps_i: DielectricProfile,
    eps_ii: DielectricProfile,
    label: int,
    orders: int,
    policy: str = "fixed",
    degeneracy_tol: Optional[float] = None,
    resonance_tol: float = DEFAULT_RESONANCE_TOL,
) -> BornTrace:
    """Iterate the driven equation of ``variant`` for ``orders`` steps.

    The probe frequency starts at ``w_I[label]`` and, under the
    ``"self-consistent"`` policy, moves to the first-order estimate for
    order 1 and to the Rayleigh quotient of the previous iterate afterwards.
    Modes degenerate with ``label`` are removed from the resonant sums.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}")
    _check_same_grid(modes_i.eps, eps_ii)
    if eps_ii.values.min() < eps_ii.eps_min:
        raise AssertionError("eps_II below eps_min; division would be unsafe")
    tol = modes_i.degeneracy_tol if degeneracy_tol is None else degeneracy_tol
    omega0 = float(modes_i.omegas[label])
    exclude = exclusion_near(modes_i, omega0, tol)
    f_i = modes_i.field(label)
    delta = _delta(eps_i, eps_ii)
    trace = BornTrace(variant, int(label), policy, exclude)

    def residual(f, omega):
        if variant == "G":
            r = f - _g_step(modes_i, eps_i, eps_ii, f_i, f, omega, exclude, resonance_tol)
            return r.norm() / f.norm()
        lhs = eps_ii.multiply(f)
        r = lhs - _k_rhs(modes_i, eps_i, eps_ii, f_i, f, omega, exclude, resonance_tol)
        return r.norm() / lhs.norm()

    def record(n, f, omega, previous):
        change = (f - previous).norm()
        trace.orders.append(
            BornOrder(n, omega, f, transversality_residual(f, eps_ii), change, residual(f, omega))
        )

    omega = omega0
    f = f_i if variant == "G" else eps_ii.divide(eps_i.multiply(f_i))
    record(0, f, omega, f_i)
    for n in range(1, orders + 1):
        if policy == "self-consistent":
            if n == 1:
                omega = float(np.sqrt(omega0**2 + first_order_frequency_shift(modes_i, label, delta)))
            else:
                omega = rayleigh_frequency(f, eps_ii)
        if variant == "G":
            nxt = _g_step(modes_i, eps_i, eps_ii, f_i, f, omega, exclude, resonance_tol)
        else:
            nxt = eps_ii.divide(_k_rhs(modes_i, eps_i, eps_ii, f_i, f, omega, exclude, resonance_tol))
        record(n, nxt, omega, f)
        f = nxt
    return trace


def homogeneous_ls_residual(
    variant: str,
    modes_i: ModeSet,
    eps_i: DielectricProfile,
    eps_ii: DielectricProfile,
    f_ii: VectorField,
    omega_ii: float,
    resonance_tol: float = DEFAULT_RESONANCE_TOL,
) -> float:
    """Residual of the exact homogeneous equation for an eigenpair of ``eps_II``.

    ``"G"``: ``||f - G_I V f|| / ||f||``;
    ``"K"``: ``||eps_II f - eps_I K_I V f|| / ||eps_II f||``, both at ``omega_ii``
    with the full (unreduced) kernels.
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    potential = perturbation_potential(eps_i, eps_ii, omega_ii)
    vf = potential.apply(f_ii)
    if variant == "G":
        g = kernel(modes_i, omega_ii, "G", resonance_tol=resonance_tol)
        return (f_ii - apply_kernel(g, vf)).norm() / f_ii.norm()
    k = kernel(modes_i, omega_ii, "K", resonance_tol=resonance_tol)
    lhs = eps_ii.multiply(f_ii)
    return (lhs - eps_i.multiply(apply_kernel(k, vf))).norm() / lhs.norm()


# -- coupling matrices ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """``h_II[l] = sum_n C[l, n] h_I[n]`` with ``h = eps f``.

    Rows are medium-II labels, columns medium-I labels.
    """

    matrix: np.ndarray
    residuals: np.ndarray
    basis_count: int
    complete_basis: bool
    gram_condition: float
    divergence_i: float
    divergence_ii: float

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max()) if self.residuals.size else 0.0


class CouplingError(ValueError):
    pass


def _h_columns(modes: ModeSet, eps: DielectricProfile) -> np.ndarray:
    """``eps f`` for every mode as columns of a ``(3 N, n)`` coefficient array."""
    _check_same_grid(modes.eps, eps)
    h = np.matmul(eps.matrix, modes.coefficients)
    return h.reshape(-1, len(modes))


def _max_divergence(h: np.ndarray, modes: ModeSet) -> float:
    grid = modes.grid
    k = [np.broadcast_to(kc, grid.dims).reshape(-1) for kc in grid.wavevector]
    n = grid.n_total
    div = sum(k[c][:, None] * h[c * n:(c + 1) * n] for c in range(3))
    norms = np.linalg.norm(h, axis=0)
    return float(np.max(np.linalg.norm(div, axis=0) / norms)) if norms.size else 0.0


def coupling_matrix(
    modes_i: ModeSet,
    modes_ii: ModeSet,
    eps_i: DielectricProfile,
    eps_ii: DielectricProfile,
    basis_count: Optional[int] = None,
    divergence_tol: float = 1e-9,
    max_condition: float = 1e12,
) -> CouplingMatrix:
    """Least-squares expansion of each ``eps_II f_II`` in ``{eps_I f_I}``.

    ``basis_count`` truncates the medium-I basis to its lowest modes.
    """
    _check_same_grid(eps_i, eps_ii)
    h_i = _h_columns(modes_i, eps_i)
    h_ii = _h_columns(modes_ii, eps_ii)
    div_i = _max_divergence(h_i, modes_i)
    div_ii = _max_divergence(h_ii, modes_ii)
    if div_i > divergence_tol or div_ii > divergence_tol:
        raise CouplingError(f"h fields are not divergence-free ({div_i:.3g}, {div_ii:.3g})")
    count = len(modes_i) if basis_count is None else int(basis_count)
    basis = h_i[:, :count]
    solution, _, _, sing = scipy.linalg.lstsq(basis, h_ii, lapack_driver="gelsd")
    cond = float((sing[0] / sing[-1]) ** 2) if sing.size else 1.0
    if cond > max_condition:
        raise CouplingError(f"basis Gram matrix is ill-conditioned (condition {cond:.3g})")
    recon = basis @ solution
    residuals = np.linalg.norm(h_ii - recon, axis=0) / np.linalg.norm(h_ii, axis=0)
    return CouplingMatrix(
        matrix=solution.T,
        residuals=residuals,
        basis_count=count,
        complete_basis=modes_i.is_complete and count == len(modes_i),
        gram_condition=cond,
        divergence_i=div_i,
        divergence_ii=div_ii,
    )


def projected_coupling(modes_i: ModeSet, modes_ii: ModeSet, eps_ii: DielectricProfile) -> np.ndarray:
    """Closed-form couplings ``C[l, n] = <f_I[n], eps_II f_II[l]>``.

    Valid for a complete medium-I basis, where the eps_I-orthonormality of
    the ``f_I`` makes them the dual basis of the ``h_I``.
    """
    h_ii = _h_columns(modes_ii, eps_ii)
    return (modes_i.coefficients.reshape(-1, len(modes_i)).conj().T @ h_ii).T


# -- interface diagnostic ---------------------------------------------------

def insert_layer(
    eps_b: DielectricProfile,
    eps_a: DielectricProfile,
    interval: tuple[float, float],
    width: float,
    axis: int = 2,
) -> DielectricProfile:
    """``eps_b`` with ``eps_a`` substituted on ``interval`` along ``axis`` (tanh edges)."""
    _check_same_grid(eps_b, eps_a)
    from .dielectric import _periodic_window

    grid = eps_b.grid
    x = grid.coordinates()[axis]
    window = _periodic_window(x, interval[0], interval[1], width, grid.lengths[axis])
    values = low_pass(eps_b.values + window * (eps_a.values - eps_b.values), grid, eps_b.band_limit)
    return DielectricProfile(grid, values, eps_b.eps_min, eps_b.band_limit)


def _partial(values: np.ndarray, grid, axis: int) -> np.ndarray:
    k = grid.wavevector[axis]
    return np.fft.ifftn(1j * k * np.fft.fftn(values, axes=(-3, -2, -1)), axes=(-3, -2, -1))


@dataclass(frozen=True)
class InterfaceReport:
    """Jump proxies ``w * max |d_n q|`` near each interface for both zero-order fields."""

    rows: list[dict]
    identity_residual: float

    def proxy(self, variant: str, quantity: str) -> float:
        return max(r["proxy"] for r in self.rows if r["variant"] == variant and r["quantity"] == quantity)


def interface_continuity_report(
    eps_b: DielectricProfile,
    eps_a: DielectricProfile,
    modes_i: ModeSet,
    label: int,
    interval: tuple[float, float],
    width: float,
    axis: int = 2,
    slab: float = 2.0,
) -> InterfaceReport:
    """Compare interface behaviour of the two zero-order solutions.

    The realised profile is ``eps_b`` with ``eps_a`` inserted on ``interval``.
    For the ``"G"`` zero order ``E = f_I`` and for the ``"K"`` zero order
    ``E = eps_b f_I / eps_II``; in both cases ``D = eps_II E``.  The proxy for
    a quantity is ``width * max |d/dn q|`` over points within ``slab * width``
    of an interface, ``q`` being the tangential part of ``E`` or the normal
    component of ``D``.
    """
    if interval is None or len(interval) != 2:
        raise ValueError("an interval with two interface positions is required")
    if modes_i.eps is not eps_b and not np.array_equal(modes_i.eps.values, eps_b.values):
        raise ValueError("mode set does not belong to eps_b")
    grid = eps_b.grid
    eps_ii = insert_layer(eps_b, eps_a, interval, width, axis)
    f_i = modes_i.field(label)
    zero_order = {
        "G": f_i,
        "K": eps_ii.divide(eps_b.multiply(f_i)),
    }
    identity = float(np.abs(eps_ii.multiply(zero_order["K"]).values - eps_b.multiply(f_i).values).max())
    x = grid.coordinates()[axis]
    period = grid.lengths[axis]
    tangential = [c for c in range(3) if c != axis]
    rows = []
    for variant, e_field in zero_order.items():
        d_field = eps_ii.multiply(e_field)
        de_t = _partial(e_field.values[tangential], grid, axis)
        dd_n = _partial(d_field.values[axis], grid, axis)
        quantities = {
            "tangential_E": np.sqrt(np.sum(np.abs(de_t) ** 2, axis=0)),
            "normal_D": np.abs(dd_n),
        }
        for position in interval:
            dist = np.abs((x - position + 0.5 * period) % period - 0.5 * period)
            mask = dist <= slab * width
            for name, values in quantities.items():
                rows.append(
                    {
                        "variant": variant,
                        "quantity": name,
                        "interface": float(position),
                        "proxy": float(width * values[mask].max()),
                    }
                )
    return InterfaceReport(rows, identity)
