import math

import numpy as np
import pytest

from conftest import disordered_modes, disordered_profile, layered_grid
from epsmode.born import (
    CouplingError,
    born_series,
    coupling_matrix,
    first_order_frequency_shift,
    homogeneous_ls_residual,
    insert_layer,
    interface_continuity_report,
    projected_coupling,
    rayleigh_frequency,
)
from epsmode.dielectric import DielectricProfile, Homogeneous, build_profile
from epsmode.geometry import Grid, ScalarField, random_vector_field
from epsmode.green import ResonanceError, kernel
from epsmode.modes import gauge_sensitive_labels, match_modes, nondegenerate_labels, solve_modes


@pytest.fixture(scope="module")
def labels(modes_layered):
    return [int(i) for i in gauge_sensitive_labels(modes_layered)[:4]]


@pytest.mark.parametrize("variant", ["G", "K"])
def test_no_contrast_leaves_mode_unchanged(variant, modes_layered, eps_layered, labels):
    trace = born_series(variant, modes_layered, eps_layered, eps_layered, labels[0], 3)
    f_i = modes_layered.field(labels[0])
    assert [o.order for o in trace.orders] == [0, 1, 2, 3]
    for o in trace.orders:
        assert (o.field - f_i).norm() <= 1e-12
    assert trace.transversality.max() <= 1e-12
    assert trace.changes.max() <= 1e-12
    assert trace.ls_residuals.max() <= 1e-12


def test_both_variants_coincide_without_contrast(modes_layered, eps_layered, labels):
    g = born_series("G", modes_layered, eps_layered, eps_layered, labels[1], 2)
    k = born_series("K", modes_layered, eps_layered, eps_layered, labels[1], 2)
    for a, b in zip(g.fields, k.fields):
        assert (a - b).norm() <= 1e-12


def test_k_zero_order_closed_form(modes_layered, eps_layered, labels):
    eps_ii = disordered_profile(0)
    trace = born_series("K", modes_layered, eps_layered, eps_ii, labels[0], 0)
    lhs = eps_ii.multiply(trace.orders[0].field).values
    rhs = eps_layered.multiply(modes_layered.field(labels[0])).values
    assert np.abs(lhs - rhs).max() <= 1e-12


@pytest.mark.parametrize("policy", ["fixed", "self-consistent"])
def test_transversality_ladder(policy, modes_layered, eps_layered, labels):
    eps_ii = disordered_profile(1)
    for label in labels[:2]:
        k = born_series("K", modes_layered, eps_layered, eps_ii, label, 3, policy)
        g = born_series("G", modes_layered, eps_layered, eps_ii, label, 1, policy)
        assert k.transversality.max() <= 1e-9
        assert g.transversality.min() >= 1e-3
        assert all(o.field.is_finite() for o in k.orders)


def test_self_consistent_policy_moves_frequency(modes_layered, eps_layered, labels):
    eps_ii = disordered_profile(2)
    label = labels[0]
    trace = born_series("K", modes_layered, eps_layered, eps_ii, label, 3, "self-consistent")
    omegas = [o.omega for o in trace.orders]
    assert omegas[0] == modes_layered.omegas[label]
    delta = ScalarField(eps_ii.grid, eps_ii.values - eps_layered.values)
    expected = math.sqrt(omegas[0] ** 2 + first_order_frequency_shift(modes_layered, label, delta))
    assert omegas[1] == pytest.approx(expected, rel=1e-14)
    assert omegas[2] == pytest.approx(rayleigh_frequency(trace.orders[1].field, eps_ii), rel=1e-14)


def test_weak_disorder_contraction(modes_layered, eps_layered):
    label = int(nondegenerate_labels(modes_layered)[0])
    weak = disordered_modes(6, 0.01)
    matched = int(np.nonzero(match_modes(modes_layered, weak).labels == label)[0][0])
    target = weak.field(matched)
    trace = born_series("K", modes_layered, eps_layered, weak.eps, label, 2)
    errors = []
    for o in trace.orders:
        f = o.field
        # compare up to the free phase and normalisation of the iterate
        overlap = np.vdot(target.values, f.values) / np.vdot(target.values, target.values)
        errors.append((f - target * overlap).norm() / f.norm())
    assert errors[0] > errors[1] > errors[2]


def test_invalid_arguments(modes_layered, eps_layered):
    with pytest.raises(ValueError):
        born_series("X", modes_layered, eps_layered, eps_layered, 0, 1)
    with pytest.raises(ValueError):
        born_series("G", modes_layered, eps_layered, eps_layered, 0, 1, policy="lazy")


def test_reduced_kernel_excludes_degenerate_partners(modes_layered, eps_layered):
    eps_ii = disordered_profile(0)
    pair = modes_layered.degenerate_with(0)
    trace = born_series("G", modes_layered, eps_layered, eps_ii, 0, 1)
    assert set(pair.tolist()) <= set(trace.excluded)
    # the unreduced kernel at the same frequency sits on a pole
    with pytest.raises(ResonanceError):
        kernel(modes_layered, modes_layered.omegas[0], "G")


@pytest.fixture(scope="module")
def matched_pairs(modes_layered, labels):
    modes_ii = disordered_modes(7)
    m = match_modes(modes_layered, modes_ii)
    return modes_ii, [int(np.nonzero(m.labels == lam)[0][0]) for lam in labels]


@pytest.mark.parametrize("variant", ["G", "K"])
def test_homogeneous_equation_holds_for_exact_pairs(variant, modes_layered, eps_layered, matched_pairs):
    modes_ii, pairs = matched_pairs
    for mu in pairs:
        r = homogeneous_ls_residual(variant, modes_layered, eps_layered, modes_ii.eps,
                                    modes_ii.field(mu), modes_ii.omegas[mu])
        assert r <= 1e-8


def test_homogeneous_equation_is_sensitive(modes_layered, eps_layered, matched_pairs):
    modes_ii, pairs = matched_pairs
    f = modes_ii.field(pairs[0])
    noisy = f + random_vector_field(f.grid, 5) * (0.01 * f.norm())
    for variant in ("G", "K"):
        r = homogeneous_ls_residual(variant, modes_layered, eps_layered, modes_ii.eps, noisy,
                                    modes_ii.omegas[pairs[0]])
        assert r >= 1e-3


def test_coupling_identity_without_contrast(modes_layered, eps_layered):
    cm = coupling_matrix(modes_layered, modes_layered, eps_layered, eps_layered)
    assert np.abs(cm.matrix - np.eye(len(modes_layered))).max() <= 1e-10
    assert cm.complete_basis


def test_coupling_full_basis_and_truncation(modes_layered, eps_layered):
    modes_ii = disordered_modes(7)
    cm = coupling_matrix(modes_layered, modes_ii, eps_layered, modes_ii.eps)
    assert cm.max_residual <= 1e-8
    assert cm.divergence_i <= 1e-9 and cm.divergence_ii <= 1e-9
    # with a complete basis the least-squares solution has a closed form
    assert np.abs(cm.matrix - projected_coupling(modes_layered, modes_ii, modes_ii.eps)).max() <= 1e-10
    n = len(modes_layered)
    residuals = [coupling_matrix(modes_layered, modes_ii, eps_layered, modes_ii.eps, basis_count=c).residuals.mean()
                 for c in (n, 3 * n // 4, n // 2, n // 4)]
    assert all(a <= b for a, b in zip(residuals, residuals[1:]))
    assert residuals[-1] > 1e-2


def test_coupling_rejects_non_transverse_family(modes_layered, eps_layered):
    other = disordered_profile(3)
    with pytest.raises(CouplingError):
        # eps_II f_I is not divergence-free for the wrong profile
        coupling_matrix(modes_layered, modes_layered, other, eps_layered)


def test_first_order_shift_examples(modes_layered):
    grid = modes_layered.grid
    zero = ScalarField(grid, np.zeros(grid.dims))
    assert first_order_frequency_shift(modes_layered, 5, zero) == 0.0
    vacuum = build_profile(grid, Homogeneous(1.0))
    modes = solve_modes(vacuum, count=10)
    for delta in (0.02, 0.01):
        shift = first_order_frequency_shift(modes, 3, ScalarField(grid, np.full(grid.dims, delta)))
        w2 = modes.omegas[3] ** 2
        assert shift / w2 == pytest.approx(-delta, rel=1e-12)
        exact = w2 / (1 + delta) - w2
        assert abs(shift - exact) <= 2 * delta**2 * w2


def test_first_order_shift_convergence(modes_layered, eps_layered):
    label = int(nondegenerate_labels(modes_layered)[0])
    errors = []
    for rms in (0.02, 0.01):
        modes_ii = disordered_modes(7, rms)
        mu = int(np.nonzero(match_modes(modes_layered, modes_ii).labels == label)[0][0])
        delta = ScalarField(eps_layered.grid, modes_ii.eps.values - eps_layered.values)
        exact = modes_ii.omegas[mu] ** 2 - modes_layered.omegas[label] ** 2
        shift = first_order_frequency_shift(modes_layered, label, delta)
        errors.append(abs(shift - exact) / modes_layered.omegas[label] ** 2)
    assert 3 <= errors[0] / errors[1] <= 5


@pytest.fixture(scope="module")
def step_setup():
    grid = Grid((4, 1, 128), layered_grid().lengths)
    eps_b = build_profile(grid, Homogeneous(1.0))
    eps_a = build_profile(grid, Homogeneous(2.0))
    modes = solve_modes(eps_b, count=40)
    power = np.sum(np.abs(modes.fields) ** 2, axis=(2, 3, 4))
    normal = power[:, 2] / power.sum(axis=1)
    label = int(np.nonzero((normal > 0.05) & (normal < 0.95))[0][0])
    return eps_b, eps_a, modes, label


def test_interface_report_orderings(step_setup):
    eps_b, eps_a, modes, label = step_setup
    width = eps_b.grid.lengths[2] / 64
    report = interface_continuity_report(eps_b, eps_a, modes, label, (math.pi / 2, 3 * math.pi / 2), width)
    assert report.identity_residual <= 1e-12
    assert report.proxy("G", "normal_D") > report.proxy("K", "normal_D")
    assert report.proxy("K", "tangential_E") > report.proxy("G", "tangential_E")
    assert len(report.rows) == 8


def test_interface_report_without_contrast(step_setup):
    eps_b, _, modes, label = step_setup
    width = eps_b.grid.lengths[2] / 64
    report = interface_continuity_report(eps_b, eps_b, modes, label, (1.0, 4.0), width)
    for q in ("tangential_E", "normal_D"):
        assert report.proxy("G", q) == pytest.approx(report.proxy("K", q), rel=1e-12)


def test_interface_report_needs_interfaces(step_setup):
    eps_b, eps_a, modes, label = step_setup
    with pytest.raises(ValueError):
        interface_continuity_report(eps_b, eps_a, modes, label, (), 0.1)


def test_insert_layer_values(step_setup):
    eps_b, eps_a, _, _ = step_setup
    eps_ii = insert_layer(eps_b, eps_a, (math.pi / 2, 3 * math.pi / 2), eps_b.grid.lengths[2] / 64)
    assert isinstance(eps_ii, DielectricProfile)
    assert eps_ii.values[0, 0, 64] == pytest.approx(2.0, abs=1e-3)
    assert eps_ii.values[0, 0, 0] == pytest.approx(1.0, abs=1e-3)
