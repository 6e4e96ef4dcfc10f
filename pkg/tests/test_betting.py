"""Admissible intervals, UP experts, covering intervals, CBCE, growth rates."""

import math

import numpy as np
import pytest

from shadowcpd import betting as bt
from shadowcpd import qcore as qc
from shadowcpd import shadows as sh


def brute_force_intervals(t):
    # scan every [i 2^k, (i+1) 2^k - 1] with i >= 1 that could contain t
    out = set()
    k = 0
    while (1 << k) <= t:
        i = t >> k
        lo = i << k
        if i >= 1 and lo <= t <= lo + (1 << k) - 1:
            out.add((lo, lo + (1 << k) - 1))
        k += 1
    return out


def test_lambda_interval_examples():
    iv = bt.lambda_interval((-3.0, 3.0), slack=0.0)
    assert (iv.lo, iv.hi) == pytest.approx((-1 / 3, 1 / 3))
    iv = bt.lambda_interval((-3.0, 3.0), slack=0.01)
    assert (iv.lo, iv.hi) == pytest.approx((-1 / 3 + 0.01, 1 / 3 - 0.01))
    iv = bt.lambda_interval((-1.0, 9.0), slack=0.0)
    assert (iv.lo, iv.hi) == pytest.approx((-1 / 9, 1.0))


def test_lambda_interval_accepts_bounds_object():
    b = sh.EstimatorBounds(lower=-3.0, upper=3.0, mode="analytic")
    iv = bt.lambda_interval(b, slack=0.0)
    assert (iv.lo, iv.hi) == pytest.approx((-1 / 3, 1 / 3))


def test_lambda_interval_rejects_one_sided_ranges():
    with pytest.raises(ValueError):
        bt.lambda_interval((0.5, 3.0))
    with pytest.raises(ValueError):
        bt.lambda_interval((-3.0, -0.5))
    with pytest.raises(ValueError):
        bt.lambda_interval((-3.0, 3.0), slack=1.0)  # empties the interval


def test_default_slack_scales_with_width():
    assert bt.default_slack((-3.0, 3.0)) == pytest.approx(0.005 * (2 / 3))
    assert bt.default_slack((-1.0, 9.0)) == pytest.approx(0.005 * (1 + 1 / 9))


def test_interval_helpers():
    iv = bt.lambda_interval((-3.0, 3.0), slack=0.0)
    assert iv.contains(0.0)
    assert not iv.contains(0.5)
    assert iv.clip(0.5) == pytest.approx(iv.hi)
    pos = iv.nonnegative()
    assert pos.lo == 0.0
    assert pos.hi == pytest.approx(iv.hi)


def test_chebyshev_grid_interior_and_increasing():
    iv = bt.lambda_interval((-3.0, 3.0), slack=0.0)
    grid = bt.chebyshev_grid(iv, 64)
    assert grid.size == 64
    assert np.all(np.diff(grid) > 0)
    assert grid[0] > iv.lo and grid[-1] < iv.hi
    # symmetric interval gives a symmetric grid
    assert np.allclose(grid, -grid[::-1], atol=1e-12)


def test_covering_interval_examples():
    assert set(map(tuple, bt.covering_intervals(1))) == {(1, 1)}
    assert set(map(tuple, bt.covering_intervals(5))) == {(5, 5), (4, 5), (4, 7)}
    assert set(map(tuple, bt.covering_intervals(8))) == {
        (8, 8), (8, 9), (8, 11), (8, 15),
    }
    with pytest.raises(ValueError):
        bt.covering_intervals(0)


def test_covering_interval_structure_exhaustive():
    for t in range(1, 3000):
        got = set(map(tuple, bt.covering_intervals(t)))
        assert got == brute_force_intervals(t)
        assert len(got) == int(math.log2(t)) + 1
        for lo, hi in got:
            assert lo <= t <= hi


def test_covering_generations_partition():
    # intervals of one generation tile the axis without overlap
    for k in (0, 1, 3):
        cells = [(i << k, ((i + 1) << k) - 1) for i in range(1, 40)]
        for (a1, b1), (a2, b2) in zip(cells, cells[1:]):
            assert b1 + 1 == a2


def test_fresh_up_expert_bets_zero_on_symmetric_interval():
    iv = bt.lambda_interval((-3.0, 3.0), slack=0.0)
    expert = bt.UPExpert(iv)
    assert abs(expert.bet()) < 1e-12


def test_up_expert_leans_positive_after_positive_estimate():
    iv = bt.lambda_interval((-3.0, 3.0), slack=0.0)
    expert = bt.UPExpert(iv, o_bounds=(-3.0, 3.0))
    expert.update(3.0)
    lam = expert.bet()
    assert lam > 0.0
    assert iv.contains(lam)


def test_up_expert_rejects_out_of_range_estimate():
    iv = bt.lambda_interval((-3.0, 3.0), slack=0.0)
    expert = bt.UPExpert(iv, o_bounds=(-3.0, 3.0))
    with pytest.raises(ValueError):
        expert.update(4.0)


def test_up_expert_bets_stay_inside_interval():
    rng = np.random.default_rng(5)
    iv = bt.lambda_interval((-3.0, 3.0))
    expert = bt.UPExpert(iv, o_bounds=(-3.0, 3.0))
    for _ in range(300):
        lam = expert.bet()
        assert iv.lo < lam < iv.hi
        expert.update(float(rng.uniform(-3, 3)))


def test_up_expert_static_regret_bound():
    # wealth after T rounds trails the best grid constant by at most
    # log(2) + 0.5 log(T + 1) for the Beta(1/2,1/2) universal portfolio
    rng = np.random.default_rng(31)
    t_len = 100
    budget = 0.5 * math.log(t_len + 1) + math.log(2.0)
    iv = bt.lambda_interval((-3.0, 3.0))
    for _ in range(50):
        stream = rng.uniform(-3.0, 3.0, size=t_len)
        expert = bt.UPExpert(iv, o_bounds=(-3.0, 3.0))
        wealth = 0.0
        for o in stream:
            wealth += math.log1p(expert.bet() * o)
            expert.update(float(o))
        grid = expert.grid
        best = np.log1p(np.outer(stream, grid)).sum(axis=0).max()
        assert wealth >= best - budget - 1e-9


def test_cbce_first_step_is_neutral():
    iv = bt.lambda_interval((-3.0, 3.0))
    bettor = bt.CBCEBettor(iv, o_bounds=(-3.0, 3.0))
    lam = bettor.step(None)
    assert abs(lam) < 1e-12
    assert bettor.last_weights.size == 1
    assert bettor.last_weights[0] == pytest.approx(1.0)


def test_cbce_weights_form_distribution_and_bets_admissible():
    rng = np.random.default_rng(6)
    iv = bt.lambda_interval((-3.0, 3.0))
    bettor = bt.CBCEBettor(iv, o_bounds=(-3.0, 3.0))
    o_prev = None
    for t in range(1, 400):
        lam = bettor.step(o_prev)
        w = bettor.last_weights
        assert np.all(w >= 0.0)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert w.size == int(math.log2(t)) + 1
        assert iv.lo <= lam <= iv.hi
        o_prev = float(rng.uniform(-3, 3))


def test_cbce_increments_stay_positive():
    rng = np.random.default_rng(7)
    b = sh.estimator_bounds(qc.pauli_string("XX"), "local")
    iv = bt.lambda_interval(b)
    bettor = bt.CBCEBettor(iv, o_bounds=(b.lower, b.upper))
    o_prev = None
    for _ in range(500):
        lam = bettor.step(o_prev)
        o_prev = float(rng.choice([b.lower, 0.0, b.upper]))
        assert 1.0 + lam * o_prev > 0.0


def test_cbce_rejects_out_of_order_use():
    iv = bt.lambda_interval((-3.0, 3.0))
    bettor = bt.CBCEBettor(iv, o_bounds=(-3.0, 3.0))
    bettor.step(None)
    with pytest.raises(ValueError):
        bettor.step(None)  # second step needs the previous estimate


def test_cbce_adapts_after_adversarial_prefix():
    # 50 hostile rounds then 50 favorable ones; the post-switch log-wealth
    # must stay within the strongly adaptive budget of the best constant
    iv = bt.lambda_interval((-3.0, 3.0))
    bettor = bt.CBCEBettor(iv, o_bounds=(-3.0, 3.0))
    stream = [-1.0] * 50 + [3.0] * 50
    post = 0.0
    o_prev = None
    for t, o in enumerate(stream, start=1):
        lam = bettor.step(o_prev)
        if t > 50:
            post += math.log1p(lam * o)
        o_prev = o
    grid = bt.chebyshev_grid(iv)
    oracle = np.log1p(np.outer([3.0] * 50, grid)).sum(axis=0).max()
    budget = 5.0 * math.sqrt(50.0 * (7.0 * math.log(100.0) + 5.0))
    assert post >= oracle - budget


def sar_ratio(t_len, rng):
    """Worst windowed regret over windows of length t_len // 4, per step."""
    iv = bt.lambda_interval((-3.0, 3.0))
    bettor = bt.CBCEBettor(iv, o_bounds=(-3.0, 3.0))
    stream = rng.uniform(-1.0, 3.0, size=t_len)
    logs = np.empty(t_len)
    o_prev = None
    for t in range(t_len):
        lam = bettor.step(o_prev)
        logs[t] = math.log1p(lam * stream[t])
        o_prev = float(stream[t])
    grid = bt.chebyshev_grid(iv)
    per_grid = np.log1p(np.outer(stream, grid))  # (T, K)
    cum = np.vstack([np.zeros(grid.size), np.cumsum(per_grid, axis=0)])
    cum_algo = np.concatenate([[0.0], np.cumsum(logs)])
    width = t_len // 4
    worst = -np.inf
    for s in range(t_len - width + 1):
        oracle = (cum[s + width] - cum[s]).max()
        got = cum_algo[s + width] - cum_algo[s]
        worst = max(worst, oracle - got)
    return worst / width


def test_cbce_strongly_adaptive_regret_shrinks():
    rng = np.random.default_rng(11)
    ratios = [sar_ratio(t, rng) for t in (256, 1024, 4096)]
    assert ratios[0] > ratios[1] > ratios[2]


def test_growth_rate_exact_single_qubit():
    # ô for X on the theta=1 state: 3 w.p. 1/3, else 0; best bet sits at the
    # slack-trimmed top of the interval
    rho = qc.make_theta_state(1, 1.0)
    obs = qc.rotated_observable(1, 0.0)
    got = bt.estimate_growth_rate(rho, [obs], "local")
    slack = bt.default_slack((-3.0, 3.0))
    lam_hi = 1 / 3 - slack
    want = math.log1p(3.0 * lam_hi) / 3.0
    assert got.d_star == pytest.approx(want, rel=1e-12)
    assert got.lambda_star == pytest.approx(lam_hi, rel=1e-12)
    assert got.i_star == 0


def test_growth_rate_zero_for_maximally_mixed_state():
    rho = qc.DensityMatrix(np.eye(2) / 2)
    obs = qc.pauli_string("X")
    got = bt.estimate_growth_rate(rho, [obs], "local")
    assert got.d_star == pytest.approx(0.0, abs=1e-12)
    assert got.lambda_star == pytest.approx(0.0, abs=1e-12)


def test_growth_rate_picks_strongest_observable():
    rho = qc.make_theta_state(1, 0.9)
    strong = qc.rotated_observable(1, 0.0)  # mean 0.9
    weak = qc.rotated_observable(1, 1.0)  # mean 0.9 cos(1)
    got = bt.estimate_growth_rate(rho, [weak, strong], "local")
    assert got.i_star == 1
    got = bt.estimate_growth_rate(rho, [strong, weak], "local")
    assert got.i_star == 0
    assert got.d_star == max(got.per_observable)
    assert all(v >= 0.0 for v in got.per_observable)


def test_growth_rate_monte_carlo_agrees_with_formula():
    # d=4 is past the enumeration limit, so this exercises the sampling path;
    # for theta=1 the estimate is 81 w.p. 1/81 and 0 otherwise
    rho = qc.make_theta_state(4, 1.0)
    obs = qc.pauli_string("XXXX")
    got = bt.estimate_growth_rate(
        rho, [obs], "local", shots=20000, rng=np.random.default_rng(3)
    )
    slack = bt.default_slack((-81.0, 81.0))
    lam_hi = 1 / 81 - slack
    want = math.log1p(81.0 * lam_hi) / 81.0
    assert got.d_star == pytest.approx(want, rel=0.2)


def test_growth_rate_input_validation():
    rho = qc.make_theta_state(1, 1.0)
    with pytest.raises(ValueError):
        bt.estimate_growth_rate(rho, [], "local")
    with pytest.raises(ValueError):
        bt.estimate_growth_rate(rho, [qc.pauli_string("X")], "local", grid_size=0)
