"""Normal modes of ``curl curl f = omega**2 eps f`` on the periodic grid.

The generalized Hermitian problem ``A f = w B f`` (``A`` the curl-curl
symbol, ``B`` the dealiased multiplication by eps) is not solved on the full
``3 N`` dimensional coefficient space.  Every mode with ``omega > 0`` has a
displacement-like field ``h = B f`` that is divergence-free with zero mean,
so it is parametrised by the two transverse polarisations of each nonzero
wave vector, ``h = T c``.  Projecting gives the standard Hermitian problem

    L^{1/2} (T^H B^{-1} T) L^{1/2} d = omega**2 d,     c = L^{1/2} d / omega,

with ``L = |k|**2`` on the transverse columns.  The curl-free null space of
``A`` (dimension ``N + 2``) never enters, the ``2 N - 2`` eigenvalues are all
positive, and ``eps * f = T c`` is transverse to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np
import scipy.linalg

from .dielectric import DENSE_LIMIT, DielectricProfile
from .geometry import (
    Grid,
    VectorField,
    _check_same_grid,
    curl_curl,
    divergence,
    from_coefficients,
    to_coefficients,
)

ALL = "all"
DEFAULT_DEGENERACY_TOL = 1e-6
NORMALIZATION = "eps-orthonormal"
PHASE_CONVENTION = "dominant-fourier-real-positive"
_TIE_RTOL = 1e-8
# Only numerically exact degeneracies are re-mixed into a canonical basis;
# mixing modes split by more than this would spoil their eigen-residuals.
_CANONICAL_RTOL = 1e-10


class ModeSolveError(RuntimeError):
    pass


def full_mode_count(grid: Grid) -> int:
    """Number of modes with nonzero frequency, ``2 N - 2``."""
    return 2 * grid.n_total - 2


def default_omega_tol(grid: Grid) -> float:
    return 1e-6 * (2.0 * np.pi / max(grid.lengths))


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Eigenfrequencies and eps-orthonormal mode profiles of one profile.

    ``fields[i]`` holds ``f_i`` with shape ``(3, Nx, Ny, Nz)``; modes are
    sorted by frequency, with exact or near degeneracies (relative spacing
    below ``degeneracy_tol``) ordered by their dominant Fourier index.
    """

    eps: DielectricProfile
    omegas: np.ndarray
    fields: np.ndarray
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL
    normalization: str = NORMALIZATION
    phase_convention: str = PHASE_CONVENTION
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        omegas = np.asarray(self.omegas, dtype=float)
        fields = np.asarray(self.fields, dtype=complex)
        if fields.shape != (omegas.size,) + self.eps.grid.vector_shape:
            raise ValueError("mode fields do not match frequencies and grid")
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "fields", fields)

    @property
    def grid(self) -> Grid:
        return self.eps.grid

    def __len__(self) -> int:
        return self.omegas.size

    @property
    def is_complete(self) -> bool:
        return len(self) == full_mode_count(self.grid)

    def field(self, label: int) -> VectorField:
        return VectorField(self.grid, self.fields[label])

    @property
    def matrix(self) -> np.ndarray:
        """Modes as rows of an ``(n_modes, 3 N)`` array."""
        return self.fields.reshape(len(self), -1)

    @cached_property
    def coefficients(self) -> np.ndarray:
        """Fourier coefficients, shape ``(3, N, n_modes)``."""
        coeffs = np.sqrt(self.grid.cell_volume) * np.fft.fftn(self.fields, axes=(-3, -2, -1), norm="ortho")
        return np.ascontiguousarray(coeffs.reshape(len(self), 3, -1).transpose(1, 2, 0))

    def clusters(self, tol: Optional[float] = None) -> list[np.ndarray]:
        return _clusters(self.omegas, self.degeneracy_tol if tol is None else tol)

    def degenerate_with(self, label: int, tol: Optional[float] = None) -> np.ndarray:
        """Labels whose frequency lies within ``tol * omega_label`` of ``label``."""
        tol = self.degeneracy_tol if tol is None else tol
        w = self.omegas[label]
        return np.nonzero(np.abs(self.omegas - w) <= tol * w)[0]


def _clusters(omegas: np.ndarray, tol: float) -> list[np.ndarray]:
    if omegas.size == 0:
        return []
    breaks = np.nonzero(np.diff(omegas) > tol * omegas[1:])[0] + 1
    return np.split(np.arange(omegas.size), breaks)


def polarization_basis(k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors ``e1, e2`` perpendicular to each row of ``k``.

    ``e1`` is along ``z x k`` unless ``k`` is parallel to z, in which case
    it is x; ``e2 = k_hat x e1``.
    """
    k = np.atleast_2d(np.asarray(k, dtype=float))
    khat = k / np.linalg.norm(k, axis=1, keepdims=True)
    e1 = np.stack([-khat[:, 1], khat[:, 0], np.zeros(len(khat))], axis=1)
    size = np.linalg.norm(e1, axis=1)
    along_z = size < 1e-12
    e1[along_z] = (1.0, 0.0, 0.0)
    e1[~along_z] /= size[~along_z, None]
    e2 = np.cross(khat, e1)
    return e1, e2


def flat_wavevectors(grid: Grid) -> np.ndarray:
    """``(N, 3)`` wave vectors in flattened FFT order."""
    m = grid.flat_mode_indices().astype(float)
    return m * (2.0 * np.pi / np.asarray(grid.lengths))


def _row_rank(grid: Grid) -> np.ndarray:
    """Lexicographic rank of each coefficient row ``(component, k)``.

    Rows are ordered by the signed Fourier index ``(mx, my, mz)`` and then
    by component.
    """
    m = grid.flat_mode_indices()
    n = grid.n_total
    comp = np.repeat(np.arange(3), n)
    mx, my, mz = (np.tile(m[:, i], 3) for i in range(3))
    order = np.lexsort((comp, mz, my, mx))
    rank = np.empty(3 * n, dtype=np.int64)
    rank[order] = np.arange(3 * n)
    return rank


def _dominant_row(vec: np.ndarray, rank: np.ndarray) -> int:
    mags = np.abs(vec)
    candidates = np.nonzero(mags >= mags.max() * (1.0 - _TIE_RTOL))[0]
    return int(candidates[np.argmin(rank[candidates])])


def _canonical_cluster(block: np.ndarray, rank: np.ndarray) -> np.ndarray:
    """Deterministic basis of a degenerate subspace.

    ``block`` holds B-orthonormal columns.  Each step picks the coefficient
    row with the largest attainable magnitude (ties broken by ``rank``),
    takes the unit vector of the subspace that maximises it, and recurses on
    the B-orthogonal complement.
    """
    out = []
    current = block
    while current.shape[1] > 0:
        norms = np.linalg.norm(current, axis=1)
        candidates = np.nonzero(norms >= norms.max() * (1.0 - _TIE_RTOL))[0]
        p = candidates[np.argmin(rank[candidates])]
        x = current[p].conj() / norms[p]
        out.append(current @ x)
        if current.shape[1] == 1:
            break
        current = current @ scipy.linalg.null_space(x.conj()[None, :])
    return np.stack(out, axis=1)


def solve_modes(
    eps: DielectricProfile,
    count: Union[int, str] = ALL,
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL,
    omega_tol: Optional[float] = None,
) -> ModeSet:
    """Lowest ``count`` eps-transverse normal modes of ``eps`` (dense solve)."""
    grid = eps.grid
    n = grid.n_total
    total = full_mode_count(grid)
    if count == ALL:
        count = total
    count = int(count)
    if not 0 <= count <= total:
        raise ValueError(f"count must lie in [0, {total}], got {count}")
    if n > DENSE_LIMIT:
        raise ModeSolveError(f"dense eigensolve limited to {DENSE_LIMIT} grid points, got {n}")
    omega_tol = default_omega_tol(grid) if omega_tol is None else omega_tol
    if count == 0:
        return ModeSet(eps, np.zeros(0), np.zeros((0,) + grid.vector_shape, dtype=complex), degeneracy_tol)

    kvec = flat_wavevectors(grid)
    nonzero = np.nonzero(np.einsum("ij,ij->i", kvec, kvec) > 0)[0]
    e1, e2 = polarization_basis(kvec[nonzero])
    binv = eps.inverse_matrix
    sub = binv[np.ix_(nonzero, nonzero)]
    pol = (e1, e2)
    m_blocks = [[sub * (pol[a] @ pol[b].T) for b in range(2)] for a in range(2)]
    m_mat = np.block(m_blocks)
    root = np.sqrt(np.tile(np.einsum("ij,ij->i", kvec[nonzero], kvec[nonzero]), 2))
    s_mat = root[:, None] * m_mat * root[None, :]
    s_mat = 0.5 * (s_mat + s_mat.conj().T)
    try:
        w, d = scipy.linalg.eigh(s_mat, subset_by_index=[0, count - 1], driver="evr")
    except np.linalg.LinAlgError as exc:
        raise ModeSolveError("eigensolver did not converge") from exc
    if np.any(w <= omega_tol**2):
        raise ModeSolveError("non-positive eigenvalue in the transverse subspace")
    omegas = np.sqrt(w)
    c = root[:, None] * d / omegas[None, :]
    half = nonzero.size
    h = np.zeros((3, n, count), dtype=complex)
    for comp in range(3):
        h[comp, nonzero] = e1[:, comp, None] * c[:half] + e2[:, comp, None] * c[half:]
    u = np.matmul(binv, h).reshape(3 * n, count)

    rank = _row_rank(grid)
    order = []
    for cluster in _clusters(omegas, _CANONICAL_RTOL):
        if cluster.size > 1:
            u[:, cluster] = _canonical_cluster(u[:, cluster], rank)
        keys = []
        for j in cluster:
            p = _dominant_row(u[:, j], rank)
            u[:, j] *= np.conj(u[p, j]) / abs(u[p, j])
            keys.append(rank[p])
        order.extend(cluster[np.argsort(keys, kind="stable")])
    # fields are permuted inside exactly degenerate clusters; the eigenvalue
    # array stays sorted so that rounding never breaks the ascending order
    u = u[:, np.asarray(order)]
    coeffs = u.T.reshape((count,) + grid.vector_shape)
    fields = from_coefficients(grid, coeffs)
    meta = {"omega_tol": omega_tol, "count": count}
    return ModeSet(eps, omegas, fields, degeneracy_tol, metadata=meta)


def transversality_residual(f: VectorField, eps: DielectricProfile) -> float:
    """``||div(eps f)|| / ||f||``; zero for an eps-transverse field."""
    _check_same_grid(f, eps)
    size = f.norm()
    if size == 0.0:
        raise ValueError("transversality of a zero field is undefined")
    return divergence(f, eps).norm() / size


def eigen_residual(modes: ModeSet, label: int) -> float:
    """``||curl curl f - omega**2 eps f|| / ||eps f||`` for one mode."""
    f = modes.field(label)
    bf = modes.eps.multiply(f)
    return (curl_curl(f) - bf * modes.omegas[label] ** 2).norm() / bf.norm()


def gram_matrix(modes: ModeSet, weight: Optional[DielectricProfile] = None) -> np.ndarray:
    """``G[i, j] = <f_i, weight f_j>`` (default weight: the modes' own eps)."""
    weight = modes.eps if weight is None else weight
    _check_same_grid(modes.eps, weight)
    u = modes.coefficients
    weighted = np.matmul(weight.matrix, u)
    return sum(u[c].conj().T @ weighted[c] for c in range(3))


def nondegenerate_labels(modes: ModeSet, rel_gap: float = 1e-3) -> np.ndarray:
    """Labels whose nearest neighbour in frequency is more than ``rel_gap * omega`` away."""
    w = modes.omegas
    gaps = np.full(w.size, np.inf)
    if w.size > 1:
        d = np.diff(w)
        gaps[:-1] = d
        gaps[1:] = np.minimum(gaps[1:], d)
    return np.nonzero(gaps > rel_gap * w)[0]


def flat_axis_fraction(modes: ModeSet) -> np.ndarray:
    """Share of each mode's squared norm carried by components along flat axes.

    An axis is flat when the grid has one point along it.  A field pointing
    purely along flat axes has no derivative along its own direction, so it
    is eps-transverse for every profile on the grid.
    """
    flat = [c for c in range(3) if modes.grid.dims[c] == 1]
    power = np.sum(np.abs(modes.fields) ** 2, axis=(2, 3, 4))
    return power[:, flat].sum(axis=1) / power.sum(axis=1)


def gauge_sensitive_labels(modes: ModeSet, rel_gap: float = 1e-3, tol: float = 1e-6) -> np.ndarray:
    """Nondegenerate labels whose transversality can depend on the profile."""
    labels = nondegenerate_labels(modes, rel_gap)
    return labels[flat_axis_fraction(modes)[labels] < 1.0 - tol]


def maxwell_matrices(eps: DielectricProfile) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``(A, B)`` on the full ``3 N`` coefficient space.

    ``A`` is the curl-curl symbol, ``B`` the dealiased multiplication by eps.
    Meant for small grids, as an independent reference.
    """
    grid = eps.grid
    n = grid.n_total
    kvec = flat_wavevectors(grid)
    k2 = np.einsum("ij,ij->i", kvec, kvec)
    a = np.zeros((3 * n, 3 * n))
    for c in range(3):
        for d in range(3):
            diag = (k2 if c == d else 0.0) - kvec[:, c] * kvec[:, d]
            a[c * n:(c + 1) * n, d * n:(d + 1) * n] = np.diag(diag)
    b = scipy.linalg.block_diag(eps.matrix, eps.matrix, eps.matrix)
    return a, b


@dataclass(frozen=True)
class ModeMatch:
    """Greedy assignment of candidate modes to reference labels.

    ``labels[mu]`` is the reference label given to candidate ``mu`` (-1 when
    it is left over) and ``overlaps[mu]`` the magnitude of the corresponding
    eps_candidate-weighted overlap.
    """

    labels: np.ndarray
    overlaps: np.ndarray
    overlap_matrix: np.ndarray
    reference_clusters: tuple = ()

    @property
    def unmatched(self) -> np.ndarray:
        return np.nonzero(self.labels < 0)[0]

    @property
    def subspace_overlaps(self) -> np.ndarray:
        """Overlap of each candidate with the degenerate reference cluster of its label.

        Inside a degenerate cluster the individual overlaps depend on the
        arbitrary basis; the norm of the projection onto the cluster does not.
        """
        out = np.zeros(self.labels.size)
        cluster_of = {}
        for cluster in self.reference_clusters:
            for lam in cluster:
                cluster_of[int(lam)] = cluster
        for mu, lam in enumerate(self.labels):
            if lam < 0:
                continue
            members = cluster_of.get(int(lam), np.array([lam]))
            out[mu] = np.sqrt(np.sum(np.abs(self.overlap_matrix[mu, members]) ** 2))
        return out


def match_modes(reference: ModeSet, candidate: ModeSet, count_tol: int = 0) -> ModeMatch:
    """Assign each candidate mode the reference label it overlaps most."""
    _check_same_grid(reference.eps, candidate.eps)
    if abs(len(reference) - len(candidate)) > count_tol:
        raise ValueError(
            f"mode counts differ by more than {count_tol}: {len(reference)} vs {len(candidate)}"
        )
    ref_u = reference.coefficients
    cand_u = candidate.coefficients
    weighted = np.matmul(candidate.eps.matrix, ref_u)
    overlap = sum(cand_u[c].conj().T @ weighted[c] for c in range(3))
    mags = np.abs(overlap)
    labels = np.full(len(candidate), -1, dtype=np.int64)
    best = np.zeros(len(candidate))
    used = np.zeros(len(reference), dtype=bool)
    order = np.argsort(-mags, axis=None, kind="stable")
    remaining = min(len(candidate), len(reference))
    for flat in order:
        if remaining == 0:
            break
        mu, lam = divmod(int(flat), len(reference))
        if labels[mu] >= 0 or used[lam]:
            continue
        labels[mu] = lam
        best[mu] = mags[mu, lam]
        used[lam] = True
        remaining -= 1
    return ModeMatch(labels, best, overlap, tuple(reference.clusters()))
