import numpy as np
import pytest

from ommo.functions import (FunctionSequence, FunctionSum, box_game_domain, combine,
                            log_portfolio_sequence, make_dyne_sequence, make_log_portfolio,
                            make_sc_sc_quadratic, piecewise_sc_sc_sequence, sc_sc_sequence)
from ommo.geometry import Box, Product, Simplex
from ommo.metrics import (RegretLedger, average_iterate_distance, cumulative_saddle, dynamic_gap,
                          min_static_gap, regret_report, sasp_regret, static_gap,
                          variation_report, vi_regret)

SQ1 = box_game_domain(1, 1, 1.0)
PORTF = Product((Simplex(2), Box(0.5 * np.ones(2), 1.5 * np.ones(2))))


def quad(a=0.0, b=0.0, B=0.0, dom=SQ1):
    return make_sc_sc_quadratic(1.0, [a], [b], [[B]], dom)


def seq_of(fs, dom=SQ1):
    return FunctionSequence(len(fs), dom, lambda t: fs[t - 1])


def test_cumulative_saddle_single_round():
    sp = cumulative_saddle(seq_of([quad()]))
    np.testing.assert_allclose(sp.z, [0.0, 0.0], atol=1e-12)
    assert sp.exact


def test_cumulative_saddle_averages_shifts():
    sp = cumulative_saddle(seq_of([quad(0.2), quad(-0.2)]))
    np.testing.assert_allclose(sp.z, [0.0, 0.0], atol=1e-12)


def test_cumulative_saddle_symmetric_portfolio():
    fs = [make_log_portfolio([2.0, 1.0], PORTF), make_log_portfolio([1.0, 2.0], PORTF)]
    sp = cumulative_saddle(seq_of(fs, PORTF))
    np.testing.assert_allclose(sp.x, [0.5, 0.5], atol=1e-6)
    # grid oracle at 1e-3 on the x simplex, with y at its maximizing corner
    total = combine(fs)
    p = np.linspace(0, 1, 1001)
    X = np.stack([p, 1 - p], 1)
    vals = np.array([total.max_y(x) for x in X])
    assert abs(X[np.argmin(vals)][0] - sp.x[0]) <= 1e-3


def test_static_gap_examples():
    f = quad()
    assert static_gap(f, [0.0, 0.0], (np.zeros(1), np.zeros(1))) == 0.0
    assert static_gap(f, [1.0, 1.0], (np.zeros(1), np.zeros(1))) == pytest.approx(1.0)


def test_dynamic_gap_vanishes_at_round_saddle():
    f = quad(0.3, -0.4, 0.5)
    x, y, _ = f.saddle()
    assert dynamic_gap(f, np.concatenate([x, y])) == pytest.approx(0.0, abs=1e-12)
    assert dynamic_gap(f, [1.0, 1.0]) > 0


def test_min_static_gap_matches_grid():
    f = quad(0.3, -0.4, 0.5)
    ref = (np.array([0.2]), np.array([-0.1]))
    g = np.linspace(-1, 1, 2001)
    X, Y = np.meshgrid(g, g, indexing="ij")
    vals = f.value(X[..., None], ref[1]) - f.value(ref[0], Y[..., None])
    assert min_static_gap(f, ref) == pytest.approx(vals.min(), abs=1e-6)


def test_report_on_round_saddles():
    f = quad(0.2, 0.1, 0.3)
    seq = seq_of([f] * 6)
    x, y, _ = f.saddle()
    z = np.concatenate([x, y])
    led = regret_report(seq, [z] * 6, cumulative_saddle(seq))
    assert led.final("DualGap") == pytest.approx(0.0, abs=1e-12)
    assert led.final("DNEReg") == pytest.approx(0.0, abs=1e-12)


def test_report_columns_and_running_sums():
    seq = sc_sc_sequence(12, seed=3)
    rng = np.random.Generator(np.random.Philox(1))
    plays = seq.domain.sample(rng, 12)
    sp = cumulative_saddle(seq)
    led = regret_report(seq, plays, sp)
    assert led.column_names()[:5] == ["t", "x0", "x1", "y0", "y1"]
    np.testing.assert_allclose(led.columns["SDualGap"], np.cumsum(led.columns["g_prime"]))
    assert np.all(led.columns["g_star"] >= -1e-12)
    fs = seq.functions()
    assert led.final("SDualGap") == pytest.approx(sum(static_gap(f, z, sp) for f, z in zip(fs, plays)))
    np.testing.assert_allclose(led.plays(), plays)


def test_individual_regrets_match_grid_oracle():
    fs = [quad(a, b, 0.6) for a, b in ((0.5, -0.2), (-0.3, 0.4), (0.1, 0.9), (-0.7, -0.5))]
    seq = seq_of(fs)
    plays = np.array([[0.2, -0.1], [0.9, 0.3], [-0.5, 0.6], [0.0, -1.0]])
    led = regret_report(seq, plays, cumulative_saddle(seq), "all")
    g = np.linspace(-1, 1, 200_001)[:, None]
    cum_f = np.cumsum([f.value_z(z) for f, z in zip(fs, plays)])
    for i in range(4):
        lo = min(np.min(sum(f.value(g, z[1:]) for f, z in zip(fs[: i + 1], plays))), np.inf)
        hi = np.max(sum(f.value(z[:1], g) for f, z in zip(fs[: i + 1], plays)))
        assert led.columns["Reg1"][i] == pytest.approx(cum_f[i] - lo, abs=1e-8)
        assert led.columns["Reg2"][i] == pytest.approx(hi - cum_f[i], abs=1e-8)


def test_quadratic_and_generic_paths_agree():
    seq = sc_sc_sequence(6, seed=9)
    fs = seq.functions()
    wrapped = FunctionSequence(6, seq.domain, lambda t: FunctionSum([fs[t - 1]]))
    rng = np.random.Generator(np.random.Philox(2))
    plays = seq.domain.sample(rng, 6)
    sp = cumulative_saddle(seq)
    a = regret_report(seq, plays, sp, "final")
    b = regret_report(wrapped, plays, sp, "final")
    for k in ("Reg1", "Reg2", "SNEReg", "DSPReg", "DualGap"):
        assert a.final(k) == pytest.approx(b.final(k), abs=1e-6)


def test_portfolio_report_flags_numeric_oracles():
    seq = log_portfolio_sequence(8, seed=0)
    plays = [seq.domain.center()] * 8
    led = regret_report(seq, plays, cumulative_saddle(seq), "final")
    assert np.isnan(led.columns["Reg1"][0]) and not np.isnan(led.final("Reg1"))
    assert led.final("Reg1") <= led.final("DualGap") + 1e-6


def test_dyne_constant_play():
    plays = []

    def feed(t):
        return plays[t - 1][:1], plays[t - 1][1:]

    T = 1000
    seq = make_dyne_sequence(T, feed)
    for t in range(1, T + 1):
        plays.append(np.array([0.5, 0.5]))
        seq.at(t)
    sp = cumulative_saddle(seq)
    led = regret_report(seq, plays, sp)
    assert led.final("DNEReg") <= 1.0
    np.testing.assert_allclose(sp.z, [0.0, 0.0], atol=1e-9)
    assert np.sqrt(average_iterate_distance(plays, sp)) >= 0.5


def test_average_iterate_distance_examples():
    ref = (np.zeros(1), np.zeros(1))
    assert average_iterate_distance([[0.0, 0.0]] * 3, ref) == 0.0
    assert average_iterate_distance([[1.0, 1.0], [-1.0, -1.0]], ref) == 0.0
    assert average_iterate_distance([[1.0, 0.0]], ref) == pytest.approx(1.0)


def test_variation_of_stationary_sequence_is_zero():
    f = quad(0.1, 0.2, 0.3)
    seq = seq_of([f] * 5)
    plays = np.array([[0.0, 0.0], [0.3, 0.4], [0.3, 0.4], [0.0, 0.0], [1.0, 1.0]])
    vr = variation_report(seq, plays, n_samples=200)
    assert vr.U_T == vr.V_T == vr.V_T_prime == 0.0
    assert vr.Delta_T == pytest.approx(0.5 + 0.0 + 0.5 + np.sqrt(2))


def test_variation_is_nonnegative_and_piecewise():
    seq = piecewise_sc_sc_sequence(40, segments=5, seed=2)
    rng = np.random.Generator(np.random.Philox(0))
    vr = variation_report(seq, seq.domain.sample(rng, 40), n_samples=500)
    for v in (vr.U_T, vr.V_T, vr.V_T_prime, vr.C_T, vr.C_T_prime, vr.Delta_T):
        assert v >= 0
    assert vr.V_T_prime > 0


def test_sasp_window_formula_matches_combine():
    seq = sc_sc_sequence(10, seed=4)
    rng = np.random.Generator(np.random.Philox(3))
    plays = seq.domain.sample(rng, 10)
    sp = cumulative_saddle(seq)
    fast = sasp_regret(seq, plays, sp)
    fs = seq.functions()
    gp = np.array([static_gap(f, z, sp) for f, z in zip(fs, plays)])
    best = -np.inf
    for r in range(10):
        for s in range(r, 10):
            g = combine(fs[r: s + 1])
            best = max(best, gp[r: s + 1].sum() - (g.min_x(sp.y) - g.max_y(sp.x)))
    assert fast["exhaustive"] and fast["intervals"] == 55
    assert fast["value"] == pytest.approx(best, abs=1e-9)
    assert sasp_regret(seq, plays, sp, max_exhaustive=4)["exhaustive"] is False


def test_vi_regret_manual_sum():
    fs = [quad(0.2), quad(-0.1, 0.3, 0.5)]
    seq = seq_of(fs)
    plays = np.array([[0.5, 0.5], [-0.2, 0.1]])
    pts = SQ1.grid(5)
    out = vi_regret(seq, plays, pts, chunk=7)
    manual = [sum(f.operator(p) @ (z - p) for f, z in zip(fs, plays)) for p in pts]
    assert out["value"] == pytest.approx(max(manual))


def test_ledger_csv_round_trip(tmp_path):
    seq = sc_sc_sequence(9, seed=1)
    rng = np.random.Generator(np.random.Philox(4))
    led = regret_report(seq, seq.domain.sample(rng, 9), cumulative_saddle(seq), "dyadic")
    path = tmp_path / "run.csv"
    led.to_csv(path)
    back = RegretLedger.from_csv(path)
    assert back.column_names() == led.column_names()
    for k in led.column_names():
        if k == "flags":
            assert list(back.columns[k]) == list(led.columns[k])
        else:
            np.testing.assert_array_equal(back.columns[k], led.columns[k])
