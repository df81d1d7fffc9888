import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rkdo.fields import (
    ROW_SUM_TOL,
    SupervisorSpec,
    TemperatureSchedule,
    build_supervisor,
    check_field,
    debiased_target,
    field_loss,
    kernel_field,
    kl_row,
    normalize_rows,
    supervisor_update,
    temperature_at,
    uniform_field,
)
from rkdo.datasets import PointDataset
from rkdo.textio import format_matrix, load_matrix, parse_matrix, save_matrix
from rkdo.theory import random_field


def assert_valid_field(P):
    assert np.all(np.diag(P) == 0.0)
    assert np.all(P >= 0.0) and np.all(P <= 1.0)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=ROW_SUM_TOL)


def mp_kl(p, q):
    """High-precision KL with 0 log 0 = 0."""
    with mpmath.workdps(50):
        terms = (
            mpmath.mpf(a) * mpmath.log(mpmath.mpf(a) / mpmath.mpf(b)) for a, b in zip(p, q) if a > 0
        )
        return float(sum(terms))


fields_strategy = st.integers(2, 12).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(0, 2**32 - 1), st.sampled_from([0.1, 1.0, 10.0]))
)


# ---------------------------------------------------------------------------
# kl_row / field_loss
# ---------------------------------------------------------------------------


def test_kl_row_identical():
    assert kl_row([0.5, 0.5], [0.5, 0.5]) == 0.0


def test_kl_row_zero_log_zero():
    assert kl_row([1.0, 0.0], [1.0, 0.0]) == 0.0


def test_kl_row_against_high_precision_oracle():
    expected = mp_kl([0.5, 0.5], [0.25, 0.75])
    assert expected == pytest.approx(0.143841, abs=5e-7)
    assert kl_row([0.5, 0.5], [0.25, 0.75]) == pytest.approx(expected, rel=1e-14)


def test_kl_row_random_against_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        p, q = rng.dirichlet(np.ones(7), size=2)
        assert kl_row(p, q) == pytest.approx(mp_kl(p, q), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize(
    "p, q",
    [([0.5, 0.5], [1.0]), ([0.5, np.nan], [0.5, 0.5]), ([0.5, 0.5], [np.inf, 0.0])],
)
def test_kl_row_rejects_bad_input(p, q):
    with pytest.raises(ValueError):
        kl_row(p, q)


def test_kl_row_floors_vanishing_q():
    val = kl_row([0.5, 0.5], [1.0, 0.0])
    assert np.isfinite(val) and val > 10


def test_field_loss_identity_and_forced_pair():
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert field_loss(P, P) == 0.0
    R = random_field(6, np.random.default_rng(0))
    assert field_loss(R, R) == 0.0


def test_field_loss_is_mean_of_row_kls():
    P = np.array([[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]])
    Q = np.array([[0, 0.25, 0.75], [0.25, 0, 0.75], [0.25, 0.75, 0]])
    expected = np.mean([mp_kl([0.5, 0.5], [0.25, 0.75])] * 3)
    assert field_loss(P, Q) == pytest.approx(expected, rel=1e-14)


def test_field_loss_size_mismatch():
    with pytest.raises(ValueError):
        field_loss(uniform_field(3), uniform_field(4))


@settings(max_examples=60, deadline=None)
@given(fields_strategy)
def test_field_loss_nonnegative_and_zero_iff_equal(args):
    n, seed, conc = args
    rng = np.random.default_rng(seed)
    P, Q = random_field(n, rng, conc), random_field(n, rng, conc)
    assert field_loss(P, Q) >= 0.0
    assert field_loss(P, P) == 0.0
    if not np.allclose(P, Q, atol=1e-6):
        assert field_loss(P, Q) > 0.0


# ---------------------------------------------------------------------------
# supervisor_update
# ---------------------------------------------------------------------------


def test_update_alpha_one_returns_q():
    rng = np.random.default_rng(1)
    P, Q = random_field(5, rng), random_field(5, rng)
    np.testing.assert_array_equal(supervisor_update(P, Q, 1.0), Q)


def test_update_small_alpha_approaches_p():
    rng = np.random.default_rng(2)
    P, Q = random_field(5, rng), random_field(5, rng)
    np.testing.assert_allclose(supervisor_update(P, Q, 1e-15), P, atol=1e-14)


def test_update_arithmetic():
    P = np.array([[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]])
    Q = np.array([[0, 0.9, 0.1], [0.5, 0, 0.5], [0.5, 0.5, 0]])
    out = supervisor_update(P, Q, 0.2)
    np.testing.assert_allclose(out[0], [0, 0.58, 0.42], atol=1e-15)


@pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
def test_update_rejects_alpha(alpha):
    with pytest.raises(ValueError):
        supervisor_update(uniform_field(3), uniform_field(3), alpha)


# ---------------------------------------------------------------------------
# kernel_field
# ---------------------------------------------------------------------------


def test_kernel_two_points():
    Q = kernel_field(np.array([[1.0, 0.0], [0.3, -2.0]]), 0.7)
    np.testing.assert_array_equal(Q, [[0.0, 1.0], [1.0, 0.0]])


def test_kernel_equidistant_simplex_is_uniform():
    angles = 2 * np.pi * np.arange(3) / 3
    E = np.column_stack([np.cos(angles), np.sin(angles)])
    np.testing.assert_allclose(kernel_field(E, 0.5), uniform_field(3), atol=1e-15)


def test_kernel_direct_evaluation():
    E = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    Q = kernel_field(E, 0.5)
    expected = np.exp(2.0) / (np.exp(2.0) + 1.0)
    assert expected == pytest.approx(0.880797, abs=5e-7)
    assert Q[0, 1] == pytest.approx(expected, rel=1e-14)


def test_kernel_survives_huge_logits():
    E = np.array([[30.0, 0.0], [29.0, 1.0], [-30.0, 0.0]])
    Q = kernel_field(E, 0.01)
    assert np.all(np.isfinite(Q))
    assert_valid_field(Q)


def test_kernel_rejects_single_point_and_bad_tau():
    with pytest.raises(ValueError):
        kernel_field(np.ones((1, 2)), 1.0)
    with pytest.raises(ValueError):
        kernel_field(np.ones((3, 2)), 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**32 - 1), st.floats(-50, 50))
def test_softmax_shift_invariance(n, seed, shift):
    from rkdo.fields import _softmax_offdiag

    rng = np.random.default_rng(seed)
    S = rng.normal(size=(n, n))
    row_shift = np.full((n, 1), shift) * rng.uniform(0, 1, size=(n, 1))
    np.testing.assert_allclose(_softmax_offdiag(S), _softmax_offdiag(S + row_shift), atol=1e-12)


# ---------------------------------------------------------------------------
# temperature, debiasing
# ---------------------------------------------------------------------------


def test_temperature_schedule_values():
    sched = TemperatureSchedule(0.5, 0.1, 200)
    assert temperature_at(sched, 0) == 0.5
    assert temperature_at(sched, 200) == pytest.approx(0.45, abs=1e-15)
    flat = TemperatureSchedule(0.5, 0.0, 10)
    assert all(temperature_at(flat, t) == 0.5 for t in range(11))


def test_temperature_out_of_range():
    with pytest.raises(ValueError):
        temperature_at(TemperatureSchedule(0.5, 0.1, 10), 11)
    with pytest.raises(ValueError):
        TemperatureSchedule(0.5, 1.0, 10)


@given(st.floats(1e-3, 10), st.floats(0, 0.999), st.integers(1, 500))
def test_temperature_positive_and_monotone(tau0, beta, T):
    sched = TemperatureSchedule(tau0, beta, T)
    taus = np.array([temperature_at(sched, t) for t in range(T + 1)])
    assert np.all(taus > 0)
    assert np.all(np.diff(taus) <= 0)


def test_debias_identity_and_arithmetic():
    P = np.array([[0, 1.0, 0], [1.0, 0, 0], [1.0, 0, 0]])
    np.testing.assert_array_equal(debiased_target(P, 0.0), P)
    np.testing.assert_allclose(debiased_target(P, 0.2)[0], [0, 0.9, 0.1], atol=1e-15)
    with pytest.raises(ValueError):
        debiased_target(P, 1.0)


# ---------------------------------------------------------------------------
# Supervisors
# ---------------------------------------------------------------------------


def test_positive_pairs_one_hot():
    ds = PointDataset(np.zeros((3, 2)), np.zeros(3, dtype=int))
    P = build_supervisor(SupervisorSpec("positive_pairs", pairs=((0, 1),)), ds)
    np.testing.assert_array_equal(P[0], [0, 1, 0])
    np.testing.assert_array_equal(P[1], [1, 0, 0])
    assert_valid_field(P)


def test_label_uniform_single_partner():
    ds = PointDataset(np.zeros((4, 2)), np.array([0, 0, 1, 1]))
    P = build_supervisor(SupervisorSpec("label_uniform"), ds)
    np.testing.assert_array_equal(P[0], [0, 1, 0, 0])


def test_label_uniform_rejects_singleton_class():
    ds = PointDataset(np.zeros((3, 2)), np.array([0, 0, 1]))
    with pytest.raises(ValueError):
        build_supervisor(SupervisorSpec("label_uniform"), ds)


def test_knn_gaussian_direct_kernel():
    pts = np.array([[0.0], [1.0], [2.0]])
    P = build_supervisor(SupervisorSpec("knn_gaussian", k=2, sigma=1.0), pts)
    w = np.array([np.exp(-0.5), np.exp(-2.0)])
    np.testing.assert_allclose(P[0, 1:], w / w.sum(), rtol=1e-14)
    np.testing.assert_allclose(P[1], [0.5, 0, 0.5], rtol=1e-14)


def test_knn_rejects_k_too_large():
    with pytest.raises(ValueError):
        build_supervisor(SupervisorSpec("knn_gaussian", k=3), np.zeros((3, 2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 20), st.integers(0, 2**32 - 1), st.floats(0.01, 1.0), st.floats(0.05, 5))
def test_operations_preserve_row_stochasticity(n, seed, alpha, tau):
    rng = np.random.default_rng(seed)
    P, Q = random_field(n, rng), random_field(n, rng)
    assert_valid_field(supervisor_update(P, Q, alpha))
    assert_valid_field(kernel_field(normalize_rows(rng.normal(size=(n, 3))), tau))
    assert_valid_field(debiased_target(P, min(alpha, 0.99)))
    pts = rng.normal(size=(n, 2))
    labels = np.arange(n) % 2
    ds = PointDataset(pts, labels, pair_map=np.arange(n) ^ 1 if n % 2 == 0 else None)
    assert_valid_field(build_supervisor(SupervisorSpec("knn_gaussian", k=3, sigma=0.5), ds))
    assert_valid_field(build_supervisor(SupervisorSpec("label_uniform"), ds))
    if n % 2 == 0:
        assert_valid_field(build_supervisor(SupervisorSpec("positive_pairs"), ds))


@settings(max_examples=60, deadline=None)
@given(fields_strategy, st.floats(1e-4, 1.0))
def test_jensen_step_property(args, alpha):
    n, seed, conc = args
    rng = np.random.default_rng(seed)
    P, Q = random_field(n, rng, conc), random_field(n, rng, conc)
    lhs = field_loss(supervisor_update(P, Q, alpha), Q)
    assert lhs <= (1 - alpha) * field_loss(P, Q) + 1e-9


def test_check_field_rejects_invalid():
    with pytest.raises(ValueError):
        check_field(np.ones((3, 3)) / 3)  # non-zero diagonal
    bad = uniform_field(3)
    bad[0, 1] += 1e-6
    with pytest.raises(ValueError):
        check_field(bad)


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------


def test_matrix_text_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    M = rng.normal(size=(7, 3)) * 10.0 ** rng.integers(-20, 20, size=(7, 3))
    text = format_matrix(M)
    assert text.splitlines()[0] == "7 3"
    np.testing.assert_array_equal(parse_matrix(text), M)
    save_matrix(tmp_path / "m.txt", M)
    np.testing.assert_array_equal(load_matrix(tmp_path / "m.txt"), M)


def test_matrix_text_rejects_wrong_row_count():
    with pytest.raises(ValueError):
        parse_matrix("3 2\n1 2\n3 4\n")
