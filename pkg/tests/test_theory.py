import numpy as np
import pytest

from rkdo import theory
from rkdo.fields import field_loss, supervisor_update
from rkdo.harness.runs import capacity_fixture, imperfect_fixture
from rkdo.theory import (
    EpsSchedule,
    check_jensen_lemma,
    jensen_sweep,
    perturb_to_loss,
    random_field,
    run_capacity_limited,
    run_ideal_recursion,
    run_imperfect_inner,
    two_stage_ok,
    unrolled_bound,
)


def pair(n, seed, conc=1.0):
    rng = np.random.default_rng(seed)
    return random_field(n, rng, conc), random_field(n, rng, conc)


def test_random_field_is_valid():
    P = random_field(9, np.random.default_rng(0), 0.1)
    assert np.all(np.diag(P) == 0)
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("alpha", [0.1, 0.5, 1.0])
def test_ideal_recursion_decays(alpha):
    P0, Q0 = pair(10, 1)
    rep = run_ideal_recursion(P0, Q0, alpha, 20)
    assert rep.passed and rep.failed_at is None
    assert two_stage_ok(rep)
    assert rep.L[0] > 0
    assert np.all(rep.slack >= -theory.EXACT_TOL)


def test_ideal_recursion_first_step_with_delayed_inner():
    # An inner step that lags one update behind still satisfies the Jensen
    # half of the decomposition and decays geometrically.
    P0, Q0 = pair(6, 2)
    lagged = {"Q": Q0}

    def inner(P):
        out, lagged["Q"] = lagged["Q"], P.copy()
        return out

    rep = run_ideal_recursion(P0, Q0, 0.5, 10, inner=inner)
    assert np.all(rep.Lhat[1:] <= 0.5 * rep.L[:-1] + 1e-12)


def test_skip_ema_fault_is_detected():
    P0, Q0 = pair(8, 3)
    rep = run_ideal_recursion(P0, Q0, 0.5, 10, inner=lambda P: Q0, update=lambda P, Q, a: P)
    assert not rep.passed
    assert rep.failed_at == 1
    assert not two_stage_ok(rep)


def test_jensen_lemma_direct():
    P, Q = pair(5, 4)
    slack = check_jensen_lemma(P, Q, 0.3)
    assert slack >= 0
    manual = 0.7 * field_loss(P, Q) - field_loss(supervisor_update(P, Q, 0.3), Q)
    assert slack == pytest.approx(manual, rel=1e-14)


def test_jensen_sweep_nonnegative_and_seeded():
    s1 = jensen_sweep(200, seed=5)
    s2 = jensen_sweep(200, seed=5)
    np.testing.assert_array_equal(s1, s2)
    assert s1.min() >= -1e-9


def test_jensen_sweep_catches_skip_ema():
    assert jensen_sweep(50, seed=0, update=lambda P, Q, a: P).min() < -1e-9


def test_perturb_to_loss_hits_target():
    P, R = pair(12, 6)
    for target in (1e-6, 1e-3, 0.1):
        Q = perturb_to_loss(P, R, target)
        L = field_loss(P, Q)
        assert L <= target
        assert L == pytest.approx(target, rel=1e-9)
    np.testing.assert_array_equal(perturb_to_loss(P, R, 0.0), P)
    np.testing.assert_array_equal(perturb_to_loss(P, R, 1e6), R)


def test_unrolled_bound():
    eps = np.array([0.0, 0.1, 0.1])
    assert unrolled_bound(1.0, 0.5, eps) == pytest.approx(0.25 + 0.05 + 0.1)


def test_eps_schedule():
    assert EpsSchedule(0.1, 2.0).summable
    assert not EpsSchedule(0.05, 0.0).summable
    assert not EpsSchedule(1.0, 1.0).summable
    assert EpsSchedule(0.0, 0.0).summable
    assert EpsSchedule(0.1, 2.0)(10) == pytest.approx(1e-3)
    with pytest.raises(ValueError):
        EpsSchedule(-1.0)


def test_imperfect_summable_converges():
    P0, Q0 = imperfect_fixture(42)
    assert field_loss(P0, Q0) == pytest.approx(1.0, rel=1e-9)
    rep = run_imperfect_inner(P0, Q0, 0.5, 100, EpsSchedule(0.1, 2.0), seed=42)
    assert rep.passed
    assert rep.L[-1] < 1e-3
    assert rep.L[-1] <= rep.extras["tail_bound"] + 1e-9


def test_imperfect_constant_requires_opt_in_and_plateaus():
    P0, Q0 = imperfect_fixture(42)
    with pytest.raises(ValueError):
        run_imperfect_inner(P0, Q0, 0.5, 10, EpsSchedule(0.05, 0.0))
    rep = run_imperfect_inner(
        P0, Q0, 0.5, 100, EpsSchedule(0.05, 0.0), seed=42, require_summable=False
    )
    assert rep.passed
    assert np.all(rep.L[50:] > 0.01)
    assert rep.extras["summable"] is False


def test_capacity_fixture_shape():
    P = capacity_fixture()
    assert P.shape == (8, 8)
    assert np.count_nonzero(P[0]) == 1


@pytest.mark.slow
def test_capacity_limited_bound():
    rep = run_capacity_limited(capacity_fixture(), 0.5, 30, d=1, seed=42)
    assert rep.passed
    assert rep.extras["in_band"]
    assert np.all(rep.L >= rep.L_star - 1e-12)
    csv = rep.to_csv().splitlines()
    assert csv[0] == "t,L,Lhat,bound,slack,residual,L_star,eps"
    assert len(csv) == 32


def test_capacity_limited_short_run():
    rep = run_capacity_limited(capacity_fixture(), 0.5, 3, d=1, inner_steps=100, restarts=1)
    assert rep.passed
    assert rep.L[-1] < rep.L[0]


def test_alpha_validation():
    P0, Q0 = pair(4, 0)
    for fn in (
        lambda a: run_ideal_recursion(P0, Q0, a, 3),
        lambda a: run_imperfect_inner(P0, Q0, a, 3, EpsSchedule()),
        lambda a: run_capacity_limited(P0, a, 1),
    ):
        with pytest.raises(ValueError):
            fn(0.0)


# ---------------------------------------------------------------------------
# worked examples
# ---------------------------------------------------------------------------


def test_inner_minimize_exact_is_identity():
    P, _ = pair(10, 11)
    Q = theory.inner_minimize_exact(P)
    np.testing.assert_array_equal(Q, P)
    assert field_loss(P, Q) == 0.0


def test_alpha_one_collapses_in_one_step():
    P0, Q0 = pair(7, 12)
    rep = run_ideal_recursion(P0, Q0, 1.0, 3)
    assert rep.L[1] == 0.0


def test_bound_arithmetic():
    P0, Q0 = imperfect_fixture(13)
    rep = run_ideal_recursion(P0, Q0, 0.2, 10)
    assert rep.L[0] == pytest.approx(1.0, rel=1e-9)
    assert rep.bound[10] / rep.L[0] == pytest.approx(0.8**10)
    assert 0.8**10 == pytest.approx(0.107374, abs=5e-7)


@pytest.mark.parametrize("alpha", [0.1, 0.5, 1.0])
def test_n16_fifty_steps(alpha):
    P0, Q0 = pair(16, 15)
    rep = run_ideal_recursion(P0, Q0, alpha, 50)
    assert rep.passed and two_stage_ok(rep)
    assert np.all(np.diff(rep.L) <= 1e-12) and rep.L.min() >= 0


def test_jensen_edge_cases():
    P, Q = pair(6, 16)
    assert check_jensen_lemma(P, P, 0.3) == 0.0
    assert check_jensen_lemma(P, Q, 1.0) == pytest.approx(0.0, abs=1e-15)


def test_zero_eps_reduces_to_ideal():
    P0, Q0 = pair(8, 17)
    rep = run_imperfect_inner(P0, Q0, 0.5, 10, EpsSchedule(0.0, 0.0))
    ideal = run_ideal_recursion(P0, Q0, 0.5, 10)
    np.testing.assert_array_equal(rep.L, ideal.L)


def test_imperfect_final_within_tail_bound():
    P0, Q0 = imperfect_fixture(1)
    rep = run_imperfect_inner(P0, Q0, 0.5, 100, EpsSchedule(0.1, 2.0), seed=1)
    assert rep.extras["settled"]
    assert rep.L[-1] < 10 * rep.extras["tail_bound"]


def test_constant_eps_stays_below_eps_over_alpha():
    P0, Q0 = imperfect_fixture(2)
    rep = run_imperfect_inner(
        P0, Q0, 0.5, 100, EpsSchedule(0.05, 0.0), seed=2, require_summable=False
    )
    assert np.all(rep.L[20:] <= 0.05 / 0.5 + 1e-9)
    assert np.all(rep.L[20:] > 0.01)


def test_full_capacity_reaches_zero():
    # d >= n - 1 with free norms can represent the fixture's field closely
    rep = run_capacity_limited(capacity_fixture(), 0.5, 5, d=7, inner_steps=300, restarts=1)
    assert rep.passed
    assert rep.L_star_est < 1e-3


def test_one_dimensional_capacity_is_binding_early():
    rep = run_capacity_limited(capacity_fixture(), 0.5, 2, d=1, restarts=1, seed=42)
    assert rep.L_star[1] > 1e-3


@pytest.mark.slow
def test_larger_alpha_approaches_plateau_faster():
    # the plateau itself sinks towards 0 as the supervisor becomes
    # representable, so distance from it is measured by L itself
    reached = []
    for alpha in (0.1, 0.3, 0.9):
        rep = run_capacity_limited(capacity_fixture(), alpha, 10, d=1, restarts=1, seed=42)
        assert rep.passed
        reached.append(rep.L[5] / rep.L[0])
    assert reached[0] > reached[1] > reached[2]
