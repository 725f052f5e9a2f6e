import math

import numpy as np
import pytest

from conftest import BOX, disordered_modes, disordered_profile, layered_grid
from epsmode.dielectric import Homogeneous, build_profile
from epsmode.geometry import Grid, ScalarField, VectorField, gradient, laplacian
from epsmode.modes import (
    ModeSet,
    eigen_residual,
    full_mode_count,
    gram_matrix,
    match_modes,
    maxwell_matrices,
    nondegenerate_labels,
    polarization_basis,
    solve_modes,
    transversality_residual,
)


def analytic_spectrum(grid: Grid, eps: float) -> np.ndarray:
    """Two polarizations per nonzero wave vector, omega = |k| / sqrt(eps)."""
    k = np.sqrt(grid.k_squared).ravel()
    k = np.sort(k[k > 0])
    return np.repeat(k, 2) / np.sqrt(eps)


@pytest.fixture(scope="module")
def cube_modes():
    grid = Grid((4, 4, 4), BOX)
    return solve_modes(build_profile(grid, Homogeneous(1.0)))


def test_homogeneous_cube_lowest_shell(cube_modes):
    assert len(cube_modes) == 2 * 64 - 2
    lowest = cube_modes.omegas[np.abs(cube_modes.omegas - 1.0) < 1e-10]
    assert lowest.size == 12
    assert cube_modes.omegas[0] == pytest.approx(1.0, abs=1e-12)
    assert cube_modes.omegas[12] > 1.0 + 1e-3


def test_homogeneous_spectrum_matches_plane_waves(cube_modes):
    expected = analytic_spectrum(cube_modes.grid, 1.0)
    assert np.allclose(cube_modes.omegas, expected, rtol=1e-10, atol=0)


def test_eps_scaling_halves_frequencies(cube_modes):
    scaled = solve_modes(build_profile(cube_modes.grid, Homogeneous(4.0)))
    assert np.allclose(scaled.omegas, cube_modes.omegas / 2, rtol=1e-12, atol=0)
    # ordering and profiles follow the scaling too
    assert np.allclose(scaled.fields, cube_modes.fields / 2, atol=1e-12)


def test_transverse_count_matches_dense_rank():
    grid = Grid((2, 1, 16), BOX)
    eps = build_profile(grid, Homogeneous(1.0))
    modes = solve_modes(eps)
    assert len(modes) == full_mode_count(grid) == 62
    a, _ = maxwell_matrices(eps)
    assert np.linalg.matrix_rank(a, tol=1e-9) == 62


def test_dense_generalized_eigenproblem_agrees():
    import scipy.linalg

    grid = Grid((2, 1, 16), BOX)
    eps = disordered_small = build_profile(grid, Homogeneous(1.5))
    from epsmode.dielectric import DisorderSpec, generate_disorder

    eps = generate_disorder(disordered_small, DisorderSpec(9, 0.1))
    a, b = maxwell_matrices(eps)
    w = scipy.linalg.eigh(a, b, eigvals_only=True)
    dense = np.sqrt(w[w > 1e-9])
    modes = solve_modes(eps)
    assert np.allclose(modes.omegas, dense, rtol=1e-10)


def test_partial_solve_is_a_prefix(modes_layered, eps_layered):
    few = solve_modes(eps_layered, count=20)
    assert np.allclose(few.omegas, modes_layered.omegas[:20], rtol=1e-12)
    assert not few.is_complete and modes_layered.is_complete


def test_count_out_of_range(eps_layered):
    with pytest.raises(ValueError):
        solve_modes(eps_layered, count=full_mode_count(eps_layered.grid) + 1)


@pytest.mark.parametrize("seed", [None, 2])
def test_gram_transversality_and_residuals(seed, modes_layered):
    modes = modes_layered if seed is None else disordered_modes(seed)
    gram = gram_matrix(modes)
    assert np.abs(gram - np.eye(len(modes))).max() <= 1e-10
    assert np.all(np.diff(modes.omegas) >= 0)
    for label in range(0, len(modes), 37):
        assert transversality_residual(modes.field(label), modes.eps) <= 1e-10
        assert eigen_residual(modes, label) <= 1e-9


def test_completeness_on_divergence_free_fields(modes_layered, eps_layered):
    grid = eps_layered.grid
    rng = np.random.default_rng(0)
    a = VectorField(grid, rng.standard_normal(grid.vector_shape) + 1j * rng.standard_normal(grid.vector_shape))
    from epsmode.geometry import curl

    h = curl(a)  # divergence-free with zero mean
    target = eps_layered.divide(h)
    mat = modes_layered.matrix
    coeffs = grid.cell_volume * (mat.conj() @ h.flat)
    rebuilt = VectorField.from_flat(grid, coeffs @ mat)
    assert (rebuilt - target).norm() <= 1e-8 * target.norm()


def test_phase_and_order_are_reproducible(eps_layered, modes_layered):
    again = solve_modes(eps_layered)
    assert np.array_equal(again.omegas, modes_layered.omegas)
    assert np.allclose(again.fields, modes_layered.fields, atol=1e-13)


def test_polarization_basis_convention():
    e1, e2 = polarization_basis(np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 2.0]]))
    assert np.allclose(e1[0], [0, 1, 0]) and np.allclose(e2[0], [0, 0, 1])
    assert np.allclose(e1[1], [1, 0, 0]) and np.allclose(e2[1], [0, 1, 0])


def test_transversality_of_plane_wave_against_disorder():
    grid = layered_grid()
    eps_ii = disordered_profile(0)
    x, _, z = grid.coordinates()
    wave = np.exp(1j * (x + z)) / math.sqrt(2)
    f = VectorField(grid, np.stack([wave, np.zeros_like(wave), -wave]))
    vacuum = build_profile(grid, Homogeneous(1.0))
    assert transversality_residual(f, vacuum) <= 1e-12
    assert transversality_residual(f, eps_ii) > 1e-3


def test_transversality_of_gradient_field():
    grid = Grid((4, 1, 8), BOX)
    x, _, z = grid.coordinates()
    phi = ScalarField(grid, np.sin(x) * np.cos(2 * z) + 0.3 * np.cos(3 * z))
    g = gradient(phi)
    vacuum = build_profile(grid, Homogeneous(1.0))
    expected = laplacian(phi).norm() / g.norm()
    assert transversality_residual(g, vacuum) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError):
        transversality_residual(VectorField.zeros(grid), vacuum)


def test_match_identity(modes_layered):
    m = match_modes(modes_layered, modes_layered)
    assert np.array_equal(m.labels, np.arange(len(modes_layered)))
    assert np.allclose(m.overlaps, 1.0, atol=1e-10)
    assert m.unmatched.size == 0


def test_match_weak_disorder(modes_layered):
    weak = disordered_modes(4, 0.01)
    m = match_modes(modes_layered, weak)
    assert sorted(m.labels.tolist()) == list(range(len(modes_layered)))
    # inside a degenerate reference cluster single overlaps are basis dependent,
    # so the bound is checked for candidates assigned to isolated reference modes
    isolated = set(nondegenerate_labels(modes_layered).tolist())
    low = [mu for mu, lam in enumerate(m.labels) if lam in isolated]
    assert len(low) >= 8
    assert m.overlaps[low].min() >= 0.9
    assert m.subspace_overlaps[low].min() >= 0.9


def test_match_split_degenerate_pair(modes_layered):
    weak = disordered_modes(4, 0.01)
    m = match_modes(modes_layered, weak)
    # the lowest cluster of the ideal profile is a degenerate pair split by the disorder
    pair = modes_layered.degenerate_with(0)
    assert pair.size == 2
    cands = [int(np.nonzero(m.labels == lam)[0][0]) for lam in pair]
    block = np.abs(m.overlap_matrix[np.ix_(cands, pair)]) ** 2
    assert np.all(block.sum(axis=1) >= 0.95)
    assert abs(weak.omegas[cands[0]] - weak.omegas[cands[1]]) > 1e-8


def test_match_count_mismatch(modes_layered, eps_layered):
    few = solve_modes(eps_layered, count=10)
    with pytest.raises(ValueError):
        match_modes(modes_layered, few)


def test_modeset_rejects_bad_shapes(eps_layered):
    with pytest.raises(ValueError):
        ModeSet(eps_layered, np.ones(2), np.zeros((3, 3) + eps_layered.grid.dims))
