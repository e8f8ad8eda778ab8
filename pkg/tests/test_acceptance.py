"""Acceptance criteria, one test per criterion.

Each test records a one-line verdict; the lines are printed in the
terminal summary (see conftest.py) and when this file is run directly.
"""

import math
import random
from fractions import Fraction

import numpy as np
import pytest

from ommo.functions import (log_portfolio_sequence, make_impossibility_pair, piecewise_sc_sc_sequence,
                            sc_sc_sequence)
from ommo.harness.experiment import ExperimentConfig, run_experiment, sequence_constants
from ommo.harness.suites import agda_contraction, verify
from ommo.learners import make_learner
from ommo.meta import MMFLH, default_alpha, default_K
from ommo.metrics import (average_iterate_distance, cumulative_saddle, regret_report,
                          variation_report, vi_regret)

RESULTS: dict[int, str] = {}


def record(n, title, ok, detail):
    RESULTS[n] = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title} | {detail}"
    return ok


def play(seq, learner):
    plays = []
    for f in seq:
        plays.append(learner.play())
        learner.update(f)
    return plays


# ---------------------------------------------------------------- 1 and 3


@pytest.fixture(scope="module")
def ogda_runs():
    Ts = (16, 64, 256, 1024, 4096)
    full = sc_sc_sequence(max(Ts), seed=0, lam=1.0, half_width=1.0)
    # the learner never sees T, so shorter horizons are prefixes of one run
    lrn = make_learner("ogda", full.domain, lam=1.0)
    plays = play(full, lrn)
    out = {}
    for T in Ts:
        seq = full.prefix(T)
        c = sequence_constants(seq)
        sp = cumulative_saddle(seq)
        led = regret_report(seq, plays[:T], sp, "final")
        out[T] = dict(gap=led.final("SDualGap"), bound=c.L0 ** 2 / c.lam * math.log(T), c=c,
                      dist=average_iterate_distance(plays[:T], sp))
    return out


def test_c1_ogda_log_regret(ogda_runs):
    r = ogda_runs
    bounds_ok = all(v["gap"] <= v["bound"] for v in r.values())
    growth = [r[4 * T]["gap"] / r[T]["gap"] for T in (256, 1024)]
    ok = bounds_ok and all(g <= 1.6 for g in growth)
    detail = ", ".join(f"T={T}: {v['gap']:.3f}<={v['bound']:.2f}" for T, v in r.items())
    detail += f"; growth x4 = {growth[0]:.3f}, {growth[1]:.3f} (<=1.6)"
    assert record(1, "OGDA SDualGap <= (L0^2/lam) log T", ok, detail)


@pytest.fixture(scope="module")
def ommns_runs():
    out = {}
    for T in (64, 256, 1024):
        seq = log_portfolio_sequence(T, seed=0, n=2)
        c = sequence_constants(seq)
        lrn = make_learner("ommns", seq.domain, c)
        plays = play(seq, lrn)
        sp = cumulative_saddle(seq)
        led = regret_report(seq, plays, sp, "final")
        d = seq.domain.dim
        const = 2 * d * (1 / c.alpha + c.L0 * c.D)
        out[T] = dict(gap=led.final("SDualGap"), bound=const * math.log(T), const=const, c=c,
                      gamma=lrn.state.gamma, dist=average_iterate_distance(plays, sp))
    return out


def test_c2_ommns_log_regret(ommns_runs):
    r = ommns_runs
    alpha = r[64]["c"].alpha
    ok = alpha == 1.0 and all(v["gap"] <= v["bound"] for v in r.values())
    detail = f"alpha={alpha}, d=4; " + ", ".join(
        f"T={T}: {v['gap']:.3f}<={v['bound']:.1f}" for T, v in r.items())
    assert record(2, "OMMNS SDualGap <= 2d(1/alpha + L0 D) log T", ok, detail)


def test_c3_average_iterate(ogda_runs, ommns_runs):
    T = 1024
    o = ogda_runs[T]
    lhs_o = o["c"].lam * o["dist"]
    rhs_o = 3 * (o["c"].L0 ** 2 / o["c"].lam) * math.log(T) / T
    m = ommns_runs[T]
    lhs_m = m["gamma"] * m["dist"]
    rhs_m = 3 * m["const"] * math.log(T) / T
    ok = lhs_o <= rhs_o and lhs_m <= rhs_m
    detail = f"OGDA {lhs_o:.2e}<={rhs_o:.2e}; OMMNS {lhs_m:.2e}<={rhs_m:.2e}"
    assert record(3, "average iterate approaches z'", ok, detail)


# ---------------------------------------------------------------- 4


def test_c4_agda_contraction_and_dual_gap():
    T = 500
    seq = piecewise_sc_sc_sequence(T, segments=5, seed=3)
    c = sequence_constants(seq)
    lrn = make_learner("agda", seq.domain, c, K_cap=1_000_000)
    bad, plays = agda_contraction(seq, lrn)
    sp = cumulative_saddle(seq)
    led = regret_report(seq, plays, sp, "final")
    vr = variation_report(seq, plays, sp)
    g1 = seq.at(1).duality_gap(plays[0])
    gT = seq.at(T).duality_gap(lrn.state.z)
    rhs = 2 * vr.U_T + 2 * (g1 - gT) + 1e-6
    ok = bad == 0 and lrn.cap_hits == 0 and led.final("DualGap") <= rhs
    detail = (f"contraction violations {bad}/{T}, cap hits {lrn.cap_hits}; "
              f"DualGap {led.final('DualGap'):.3f} <= {rhs:.3f} (U_T={vr.U_T:.3f})")
    assert record(4, "AGDA contraction and DualGap bound", ok, detail)


# ---------------------------------------------------------------- 5


def test_c5_online_vi_regret():
    T = 1024
    seq = log_portfolio_sequence(T, seed=0, n=2)
    c = sequence_constants(seq)
    lrn = make_learner("online-vi", seq.domain, c, split=(2, 2))
    plays = play(seq, lrn)
    grid = seq.domain.grid(21)
    vi = vi_regret(seq, plays, grid)
    d = seq.domain.dim
    bound = (1 / c.alpha + c.L0 * c.D) * (d * math.log(T) + 1)
    ok = vi["value"] <= bound
    detail = f"max over {len(grid)} grid points {vi['value']:.3f} <= {bound:.2f}"
    assert record(5, "online VI regret on the 21-per-axis grid", ok, detail)


# ---------------------------------------------------------------- 6


def mmflh_ratio(T, K=2):
    seq = piecewise_sc_sc_sequence(T, segments=4, seed=1, half_width=1.0, coupling=0.5)
    c = sequence_constants(seq)
    sp = cumulative_saddle(seq)
    m = MMFLH(seq.domain, sp, lambda: make_learner("ogda", seq.domain, c), K=K,
              alpha=default_alpha(c, "ogda"), clip=2 * c.L0 * c.D)
    plays = play(seq, m)
    led = regret_report(seq, plays, sp, "final")
    vr = variation_report(seq, plays, sp)
    den = max(math.log(T), math.sqrt(T * vr.V_T * math.log(T)))
    return led.final("DSPReg") / den, m.clip_events


def test_c6_mmflh_dynamic_regret():
    ratios = {T: mmflh_ratio(T) for T in (128, 256, 512)}
    sqrt_k = {T: mmflh_ratio(T, default_K(T))[0] for T in (128, 512)}
    ok = ratios[512][0] <= 2 * ratios[128][0]
    detail = ", ".join(f"T={T}: {r:.3f}" for T, (r, _) in ratios.items())
    detail += f"; clips {sum(c for _, c in ratios.values())}"
    detail += "; K=ceil(sqrt T): " + ", ".join(f"T={T}: {r:.3f}" for T, r in sqrt_k.items())
    assert record(6, "MMFLH DSPReg / max(log T, sqrt(T V_T log T)) bounded", ok, detail)


# ---------------------------------------------------------------- 7


def test_c7a_dyne():
    led = run_experiment(ExperimentConfig("dyne", "constant", 1000,
                                          algorithm_params={"z0": [0.5, 0.5]}), write=False)
    dist = math.sqrt(led.meta["avg_iterate_sq_dist"])
    ok = led.final("DNEReg") <= 1 and dist >= 0.5
    detail = f"DNEReg {led.final('DNEReg'):.3g} <= 1, ||zbar - z'|| = {dist:.3f} >= 0.5"
    assert record("7a", "dyne counterexample", ok, detail)


def analytic_floor(n_seq=100, T=400, seed=0):
    rnd = random.Random(seed)
    for _ in range(n_seq):
        rhos = [Fraction(rnd.randint(0, 10**6), 10**6) for _ in range(T)]
        if sum(r * r + (1 - r) ** 2 for r in rhos) < Fraction(T, 2):
            return False
    return True


def test_c7b_impossibility():
    T = 400
    s1, s2 = make_impossibility_pair(T)
    worst = {}
    for name in ("ogda", "ommns", "agda"):
        vals = []
        for seq in (s1, s2):
            c = sequence_constants(seq)
            lrn = make_learner(name, seq.domain, c)
            led = regret_report(seq, play(seq, lrn), cumulative_saddle(seq), "final")
            vals.append(max(led.final(k) for k in ("SNEReg", "Reg1", "Reg2")))
        worst[name] = max(vals)
    floor = analytic_floor()
    ok = floor and all(v >= T / 20 for v in worst.values())
    detail = ", ".join(f"{k} {v:.1f}" for k, v in worst.items()) + f" (>= {T / 20:g}); floor exact: {floor}"
    assert record("7b", "impossibility: max{SNEReg, Reg1, Reg2} >= T/20", ok, detail)


# ---------------------------------------------------------------- 8 and 9


def test_c8_lemma_suite():
    rep = verify("lemmas", 0)
    detail = ", ".join(f"{k} {v['violations']}/{v['checked']}" for k, v in rep["properties"].items())
    assert record(8, "lemma suite at 1e-7 slack", rep["passed"], detail)


def test_c9_numeric_kernels():
    lin = verify("linalg", 0)
    proj = verify("projections", 0)
    order = verify("ordering", 0)
    ok = lin["passed"] and proj["passed"] and order["passed"]
    sm = lin["properties"]["sherman_morrison"]
    detail = (f"SM worst {sm['worst']:.1e} over {sm['checked']} updates; "
              f"grid oracle {proj['properties']['grid_oracle']['violations']} misses; "
              f"ordering {order['properties']['dne_le_dual_le_dsp']['violations']} violations")
    assert record(9, "numeric kernels and regret ordering", ok, detail)


if __name__ == "__main__":
    import sys
    code = pytest.main([__file__, "-q"])
    for line in RESULTS.values():
        print(line)
    sys.exit(code)
