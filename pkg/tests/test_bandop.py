import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmvwalk import bandop, model
from cmvwalk.bandop import NormConvergenceError, PeriodicBandedOperator, build
from cmvwalk.lattice import WalkerState
from cmvwalk.model import WalkParams

T_GRID = [0.1 * i for i in range(1, 10)]


def random_op(rng, period, lo, hi):
    coeffs = rng.standard_normal((hi - lo + 1, period)) + 1j * rng.standard_normal((hi - lo + 1, period))
    return PeriodicBandedOperator(period, lo, coeffs)


def random_state(rng, width=12):
    lo = int(rng.integers(-20, 20))
    amps = rng.standard_normal(width) + 1j * rng.standard_normal(width)
    amps[rng.random(width) < 0.5] = 0
    amps[0] = 1.0
    return WalkerState(lo, amps)


def dense(A, lo=-30, hi=30):
    idx = range(lo, hi + 1)
    return np.array([[A.entry(i, j) for j in idx] for i in idx])


@st.composite
def operators(draw, max_period=4, max_band=3):
    seed = draw(st.integers(0, 2**32 - 1))
    period = draw(st.integers(1, max_period))
    lo = draw(st.integers(-max_band, max_band))
    hi = draw(st.integers(lo, max_band))
    return random_op(np.random.default_rng(seed), period, lo, hi)


# ---------------------------------------------------------------- entries


def test_entry_examples():
    t = 0.3
    r = math.sqrt(1 - t * t)
    assert model.build_walk(t).entry(0, 0) == pytest.approx(r * r, abs=1e-15)
    assert bandop.identity().entry(5, 7) == 0
    C = model.build_C()
    for j in range(-3, 4):
        assert C.entry(2 * j, 2 * j - 2) == 1


def test_build_rejects_bad_length():
    with pytest.raises(ValueError):
        build(2, {0: [1, 2, 3]})


def test_reduced_form_trims_zero_rows():
    A = build(1, {-2: 0.0, 0: 1.0, 3: 0.0})
    assert (A.lo, A.hi) == (0, 0)
    assert bandop.zero().is_zero()


def test_dense_agreement_of_compose():
    rng = np.random.default_rng(3)
    A, B = random_op(rng, 2, -1, 2), random_op(rng, 3, -2, 1)
    AB = bandop.compose(A, B)
    assert AB.period == 6
    full = dense(A, -40, 40) @ dense(B, -40, 40)
    assert np.allclose(full[10:-10, 10:-10], dense(AB, -30, 30)[0:61, 0:61], atol=1e-12)


def test_adjoint_is_conjugate_transpose():
    rng = np.random.default_rng(4)
    A = random_op(rng, 3, -2, 1)
    assert np.allclose(dense(A.adjoint()), dense(A).conj().T)


def test_power_and_operators():
    U = model.build_walk(0.4)
    assert bandop.allclose(U**3, U @ U @ U)
    assert bandop.allclose(U**0, bandop.identity())
    assert bandop.allclose(U - U, bandop.zero())
    assert bandop.allclose(-(U * 2.0) + U + U, bandop.zero())


# ------------------------------------------------------------- properties


def test_apply_compose_matches_apply_apply():
    rng = np.random.default_rng(2024)
    ops = [random_op(rng, p, -b, b) for p, b in [(1, 1), (2, 2), (3, 1), (4, 3)]]
    ops.append(model.build_step(WalkParams(0.6, 3)))
    for A, B in zip(ops, ops[1:] + ops[:1]):
        AB = bandop.compose(A, B)
        for _ in range(200):
            psi = random_state(rng)
            lhs = bandop.apply(AB, psi)
            rhs = bandop.apply(A, bandop.apply(B, psi))
            lo, hi = min(lhs.lo, rhs.lo), max(lhs.hi, rhs.hi)
            diff = max(abs(lhs[i] - rhs[i]) for i in range(lo, hi + 1))
            assert diff <= 1e-13 * max(1.0, max(abs(lhs.array)))


@given(operators(), operators())
@settings(max_examples=50, deadline=None)
def test_apply_compose_property(A, B):
    psi = random_state(np.random.default_rng(A.period * 7 + B.period))
    lhs = bandop.apply(bandop.compose(A, B), psi)
    rhs = bandop.apply(A, bandop.apply(B, psi))
    scale = max(1.0, float(np.abs(rhs.array).max()) if not rhs.is_empty() else 1.0)
    lo = min(lhs.lo, rhs.lo) if not lhs.is_empty() else rhs.lo
    hi = max(lhs.hi, rhs.hi) if not lhs.is_empty() else rhs.hi
    for i in range(lo, hi + 1):
        assert abs(lhs[i] - rhs[i]) <= 1e-13 * scale


@given(operators())
def test_adjoint_involution(A):
    assert bandop.max_abs_diff(A.adjoint().adjoint(), A) == 0


@given(operators(max_band=2), operators(max_band=2))
@settings(deadline=None)
def test_band_growth(A, B):
    AB = bandop.compose(A, B)
    assert AB.half_bandwidth <= A.half_bandwidth + B.half_bandwidth


def test_band_growth_equality_without_cancellation():
    A = build(1, {-2: 1.0, 0: 1.0, 2: 1.0})
    B = build(1, {-1: 1.0, 1: 1.0})
    assert bandop.compose(A, B).half_bandwidth == 3


@pytest.mark.parametrize("t", T_GRID)
def test_unitarity_grid(t):
    ident = bandop.identity()
    for n in (1, 2, 3, 5):
        params = WalkParams(t, n)
        for U in (
            model.build_coin(t),
            model.build_shift(t),
            model.build_walk(t),
            model.build_field(n),
            model.build_step(params),
        ):
            assert bandop.max_abs_diff(bandop.compose(U.adjoint(), U), ident) <= 1e-13
            assert bandop.max_abs_diff(bandop.compose(U, U.adjoint()), ident) <= 1e-13


@given(st.integers(3, 12), st.integers(1, 10), st.integers(0, 2**16))
@settings(max_examples=30, deadline=None)
def test_norm_monotone_under_windowing(m1, extra, seed):
    A = random_op(np.random.default_rng(seed), 2, -2, 2)
    n1 = bandop.operator_norm(bandop.window_matrix(A, m1)).value
    n2 = bandop.operator_norm(bandop.window_matrix(A, m1 + extra)).value
    assert n2 >= n1 - 1e-10


# ----------------------------------------------------------------- windows


def test_identity_window():
    W = bandop.window_matrix(bandop.identity(), 4)
    assert W.dim == 18
    assert np.array_equal(W.matrix, np.eye(18))
    assert W.indices[0] == -8 and W.indices[-1] == 9


def test_walk_window_is_five_diagonal():
    t = 0.5
    r = math.sqrt(1 - t * t)
    W = bandop.window_matrix(model.build_walk(t), 3).matrix
    assert W.shape == (14, 14)
    rows, cols = np.nonzero(np.abs(W) > 1e-15)
    assert np.abs(rows - cols).max() == 2
    # up state at site 0 (window index 6) -> r^2 up_0 + rt down_-1 - rt down_0 + t^2 up_1
    col = W[:, 6]
    assert col[6] == pytest.approx(r * r)
    assert col[5] == pytest.approx(r * t)
    assert col[7] == pytest.approx(-r * t)
    assert col[8] == pytest.approx(t * t)


def test_field_window():
    W = bandop.window_matrix(model.build_field(2), 2)
    assert np.allclose(np.diag(W.matrix), [(-1) ** i for i in range(-4, 6)])


def test_window_too_small():
    with pytest.raises(ValueError):
        bandop.window_matrix(bandop.shift(5), 2)
    with pytest.raises(ValueError):
        bandop.position_commutator_window(model.build_B(), 1)


def test_position_commutator_window_vanishes_on_diagonals():
    assert not bandop.position_commutator_window(bandop.identity(), 5).matrix.any()
    assert not bandop.position_commutator_window(model.build_field(3), 5).matrix.any()


@pytest.mark.parametrize("name", ["B", "C"])
def test_position_commutator_norm_of_B_and_C(name):
    op = model.build_B() if name == "B" else model.build_C()
    est = bandop.position_commutator_norm(op)
    assert est.value == pytest.approx(1.0, abs=1e-8)
    assert est.stabilized


def test_position_commutator_norm_of_mixed_term():
    t = 0.3
    r = math.sqrt(1 - t * t)
    op = bandop.linear_combine([(r * t, model.build_B()), (t * t, model.build_C())])
    est = bandop.position_commutator_norm(op)
    assert est.value == pytest.approx(t, abs=1e-8)


def test_operator_norm_of_B_at_most_two():
    est = bandop.stabilized_norm(model.build_B())
    assert 1.9 < est.value <= 2.0


def test_operator_norm_rejects_bad_tol():
    with pytest.raises(ValueError):
        bandop.operator_norm(bandop.window_matrix(bandop.identity(), 2), rel_tol=0)


def test_iteration_cap_is_reported():
    W = bandop.position_commutator_window(model.build_walk(0.5) ** 3, 30)
    with pytest.raises(NormConvergenceError):
        bandop.operator_norm(W, max_iter=3, fallback=False)
    est = bandop.operator_norm(W, max_iter=3, fallback=True)
    assert est.method == "svd"
    assert est.value == pytest.approx(np.linalg.norm(W.matrix, 2))
    with bandop.svd_fallback(False):
        with pytest.raises(NormConvergenceError):
            bandop.operator_norm(W, max_iter=3)


def test_power_iteration_matches_svd():
    W = bandop.window_matrix(model.build_walk(0.7) - bandop.identity(), 10)
    est = bandop.operator_norm(W)
    assert est.value == pytest.approx(np.linalg.norm(W.matrix, 2), rel=1e-9)


# -------------------------------------------------------------- scalar fit


def test_scalar_identity_examples():
    gamma, fit = bandop.as_scalar_identity(bandop.identity())
    assert gamma == 1 and fit.max_offdiag == 0 and fit.max_diag_dev == 0
    assert bandop.as_scalar_identity(model.build_B()) is None
    fit = bandop.scalar_fit(model.build_B())
    assert fit.max_offdiag == pytest.approx(1.0)
    assert fit.worst[0] in (-1, 1)


def test_scalar_fit_reports_diagonal_spread():
    fit = bandop.scalar_fit(bandop.diagonal_operator([1.0, 3.0]))
    assert fit.gamma == pytest.approx(2.0)
    assert fit.max_diag_dev == pytest.approx(1.0)
    assert not fit.is_scalar(1e-10)
