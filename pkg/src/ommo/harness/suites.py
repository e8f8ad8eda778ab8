"""Invariant suites run by ``ommo verify``.

Each suite returns a report with per-property check and violation counts,
a pass flag and, for failures, the witness inputs needed to replay them.
"""

from __future__ import annotations

import math

import numpy as np

from ..functions import (MIN_MAX_EC, STRONGLY_CONVEX_CONCAVE, TWO_SIDED_PL, GameFunction,
                         box_game_domain, check_class_membership, log_portfolio_sequence,
                         make_log_portfolio, make_sc_sc_quadratic, piecewise_sc_sc_sequence,
                         random_coupling, sc_sc_sequence)
from ..geometry import Ball, Box, Domain, Product, Simplex, project_weighted
from ..learners import make_learner, telescoping_bound
from ..linalg import block_split_matrix, block_update, init_regularity, is_psd, rank_one_update
from ..meta import covering_bound, ending_time
from ..metrics import cumulative_saddle, regret_report

SLACK = 1e-7


def _rng(seed, stream=0):
    return np.random.Generator(np.random.Philox([seed, stream]))


class _Report:
    def __init__(self, suite, seed):
        self.suite, self.seed = suite, seed
        self.props: dict[str, dict] = {}
        self.witnesses: dict[str, object] = {}

    def add(self, name, checked, violations, witness=None):
        p = self.props.setdefault(name, {"checked": 0, "violations": 0})
        p["checked"] += int(checked)
        p["violations"] += int(violations)
        if violations and witness is not None and name not in self.witnesses:
            self.witnesses[name] = witness

    def result(self) -> dict:
        bad = sum(p["violations"] for p in self.props.values())
        return {"suite": self.suite, "seed": self.seed, "properties": self.props,
                "violations": bad, "passed": bad == 0, "witnesses": self.witnesses}


# --------------------------------------------------------------------------
# lemmas


def lemma_instances(seed: int = 0) -> dict[str, GameFunction]:
    """Representative members of each function class."""
    rng = _rng(seed, 1)
    box = box_game_domain(2, 2, 1.0)
    simplex_box = Product((Simplex(2), Box(0.5 * np.ones(2), 1.5 * np.ones(2))))
    c = rng.uniform(-0.5, 0.5, 4)
    return {
        "quadratic-separable": make_sc_sc_quadratic(1.0, np.zeros(2), np.zeros(2), np.zeros((2, 2)), box),
        "quadratic-coupled": make_sc_sc_quadratic(1.0, c[:2], c[2:], random_coupling(rng, 2, 2, 0.5), box),
        "log-portfolio-identity": make_log_portfolio(np.ones(2), simplex_box),
        "log-portfolio-random": make_log_portfolio(rng.uniform(0.5, 1.5, 2), simplex_box),
    }


def gap_regularity(f: GameFunction, ref, n_segments: int = 200, seed: int = 0,
                   slack: float = SLACK) -> dict:
    """Sampled regularity of g'(z) = f(x, y') - f(x', y) along random segments.

    sc-sc: g'(tz_a + (1-t)z_b) <= t g'(z_a) + (1-t) g'(z_b) - (lam/2) t(1-t)|z_a - z_b|^2.
    min-max EC: exp(-(gamma/4) g') is concave along the same segments.
    """
    rng = _rng(seed, 2)
    x_ref, y_ref = (np.asarray(a, float) for a in ref)
    za = f.domain.sample(rng, n_segments)
    zb = f.domain.sample(rng, n_segments)

    def g(z):
        x, y = f.split(z)
        return f.value(x, y_ref) - f.value(x_ref, y)

    ga, gb = g(za), g(zb)
    c = f.constants
    out = {"segments": n_segments}
    thetas = (0.25, 0.5, 0.75)
    if STRONGLY_CONVEX_CONCAVE in f.tags:
        sq = np.sum((za - zb) ** 2, axis=-1)
        bad = 0
        for th in thetas:
            gm = g(th * za + (1 - th) * zb)
            bad += int(np.sum(gm > th * ga + (1 - th) * gb - 0.5 * c.lam * th * (1 - th) * sq + slack))
        out["strong_convexity"] = bad
    if MIN_MAX_EC in f.tags:
        a = c.gamma / 4.0
        ha, hb = np.exp(-a * ga), np.exp(-a * gb)
        bad = 0
        for th in thetas:
            hm = np.exp(-a * g(th * za + (1 - th) * zb))
            bad += int(np.sum(hm < th * ha + (1 - th) * hb - slack))
        out["exp_concavity"] = bad
    return out


def suite_lemmas(seed: int = 0, n_samples: int = 500, n_segments: int = 200) -> dict:
    rep = _Report("lemmas", seed)
    for name, f in lemma_instances(seed).items():
        r = check_class_membership(f, n_samples, seed, SLACK)
        wit = {"instance": name, "seed": seed, "function": f.describe()}
        for key in ("sandwich", "strong", "ec_lower", "ec_monotone", "pl_x", "pl_y"):
            if key in r:
                rep.add(key, n_samples, r[key], wit)
        if STRONGLY_CONVEX_CONCAVE in f.tags:
            # sc-sc implies two-sided PL and min-max EC
            ok = TWO_SIDED_PL in f.tags and MIN_MAX_EC in f.tags
            implied = sum(r.get(k, 0) for k in ("pl_x", "pl_y", "ec_lower", "ec_monotone"))
            rep.add("sc_sc_implications", n_samples, (0 if ok else n_samples) + implied, wit)
        # zero-distance pairs give exactly zero sandwich gaps
        z = f.domain.sample(_rng(seed, 3), 1)[0]
        x, y = f.split(z)
        rep.add("degenerate_pair", 1, int(float(f.value(x, y) - f.value(x, y)) != 0.0), wit)
        refs = [f.saddle()[:2], f.split(f.domain.sample(_rng(seed, 4), 1)[0])]
        for ref in refs:
            gr = gap_regularity(f, ref, n_segments, seed)
            for key in ("strong_convexity", "exp_concavity"):
                if key in gr:
                    rep.add(f"gap_{key}", 3 * n_segments, gr[key], wit)
    return rep.result()


# --------------------------------------------------------------------------
# projections


def _grid_argmin(u, A, pts):
    d = pts - u
    vals = np.einsum("ni,ij,nj->n", d, A, d)
    return pts[int(np.argmin(vals))]


def _window(domain: Domain, centre, half, step):
    """Lattice of spacing ``step`` within ``half`` of centre, mapped into the domain.

    Lattice points outside are replaced by their Euclidean projections so
    the boundary is represented; every candidate is feasible.
    """
    free = domain.dim - 1 if isinstance(domain, Simplex) else domain.dim
    axes = [np.arange(c - half, c + half + step / 2, step) for c in centre[:free]]
    pts = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
    if isinstance(domain, Simplex):
        pts = np.hstack([pts, domain.scale - pts.sum(axis=1, keepdims=True)])
    return domain.project(pts)


def grid_projection(u, A, domain: Domain, step: float = 1e-3) -> np.ndarray:
    """Brute-force argmin of (z-u)'A(z-u) over a lattice, refined in three stages."""
    if domain.dim > 3:
        raise ValueError("grid oracle only for dim <= 3")
    u = np.asarray(u, float)
    A = np.asarray(A, float) * np.eye(domain.dim) if np.ndim(A) == 0 else np.asarray(A, float)
    best = _grid_argmin(u, A, np.vstack([domain.grid(41), domain.center()[None]]))
    for s, half in ((5 * step, 0.2), (step, 0.02)):
        pts = _window(domain, best, half, s)
        if len(pts):
            best = _grid_argmin(u, A, np.vstack([pts, best[None]]))
    return best


def _random_spd(rng, d, lo=0.5, hi=2.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return Q @ np.diag(rng.uniform(lo, hi, d)) @ Q.T


def projection_domains() -> dict[str, Domain]:
    return {
        "box2": Box(-np.ones(2), np.ones(2)),
        "box3": Box(np.array([-1.0, 0.0, -0.5]), np.array([1.0, 0.5, 0.5])),
        "simplex3": Simplex(3),
        "ball2": Ball(np.zeros(2), 1.0),
        "ball3": Ball(np.array([0.2, 0.0, -0.1]), 0.8),
    }


def suite_projections(seed: int = 0, n_cases: int = 8, tol: float = 2e-3) -> dict:
    rep = _Report("projections", seed)
    rng = _rng(seed, 5)
    for name, dom in projection_domains().items():
        d = dom.dim
        for k in range(n_cases):
            u = dom.center() + 1.5 * rng.standard_normal(d)
            A = np.diag(rng.uniform(0.5, 2.0, d)) if k % 2 == 0 else _random_spd(rng, d)
            z = project_weighted(u, A, dom)
            wit = {"domain": name, "u": u.tolist(), "A": A.tolist()}
            err = float(np.linalg.norm(z - grid_projection(u, A, dom)))
            rep.add("grid_oracle", 1, int(err > tol), dict(wit, error=err))
            rep.add("feasible", 1, int(not dom.contains(z, 1e-9)), wit)
            z2 = project_weighted(z, A, dom)
            rep.add("idempotent", 1, int(np.linalg.norm(z2 - z) > 1e-8), wit)
            v = dom.center() + 1.5 * rng.standard_normal(d)
            zv = project_weighted(v, A, dom)
            # non-expansive in the A-norm
            lhs = float((z - zv) @ A @ (z - zv))
            rhs = float((u - v) @ A @ (u - v))
            rep.add("nonexpansive", 1, int(lhs > rhs + 1e-9), dict(wit, v=v.tolist()))
    return rep.result()


# --------------------------------------------------------------------------
# linear algebra


def suite_linalg(seed: int = 0, n_updates: int = 1000, d: int = 5, tol: float = 1e-10) -> dict:
    rep = _Report("linalg", seed)
    rng = _rng(seed, 6)
    R = init_regularity(d, 1.0)
    worst = 0.0
    for k in range(n_updates):
        v = rng.standard_normal(d) / math.sqrt(d)
        R = rank_one_update(R, v)
        err = float(np.max(np.abs(R.A_inv - np.linalg.inv(R.A))))
        worst = max(worst, err)
        rep.add("sherman_morrison", 1, int(err > tol), {"update": k, "error": err})
    rep.props["sherman_morrison"]["worst"] = worst
    for k in range(50):
        F = rng.standard_normal(d)
        split = (2, d - 2)
        M = block_split_matrix(F, split)
        rep.add("block_psd", 1, int(not is_psd(M)), {"F": F.tolist()})
        R0 = init_regularity(d, 1.0)
        R1 = block_update(R0, F, split)
        err = float(np.max(np.abs(R1.A - (R0.A + M))))
        inv_err = float(np.max(np.abs(R1.A_inv - np.linalg.inv(R1.A))))
        rep.add("block_update", 1, int(err > 1e-12 or inv_err > tol), {"F": F.tolist()})
    return rep.result()


# --------------------------------------------------------------------------
# regret bounds


def agda_contraction(seq, learner) -> tuple[int, list]:
    """Play AGDA on seq, checking g*_t(z_{t+1}) <= g*_t(z_t)/4 each round."""
    bad, plays = [], []
    for t in range(1, seq.T + 1):
        z = learner.play()
        plays.append(z)
        f = seq.at(t)
        before = f.duality_gap(z)
        learner.update(f)
        after = f.duality_gap(learner.state.z)
        if after > 0.25 * before + 1e-9:
            bad.append((t, before, after))
    return len(bad), plays


def _run(seq, learner):
    plays = []
    for t in range(1, seq.T + 1):
        plays.append(learner.play())
        learner.update(seq.at(t))
    return plays


def suite_bounds(seed: int = 0, T: int = 64) -> dict:
    from ..harness.experiment import sequence_constants
    rep = _Report("bounds", seed)
    seq = sc_sc_sequence(T, seed=seed)
    c = sequence_constants(seq)
    ref = cumulative_saddle(seq)
    ogda = make_learner("ogda", seq.domain, c)
    led = regret_report(seq, _run(seq, ogda), ref, "final")
    bound = c.L0 ** 2 / c.lam * math.log(T)
    rep.add("ogda_sdualgap", 1, int(led.final("SDualGap") > bound), {"T": T, "seed": seed})
    lhs, rhs = telescoping_bound(ogda.trace, ogda.A0, ogda.state.gamma, ref.z)
    rep.add("telescoping", 1, int(lhs > rhs + 1e-9), {"learner": "ogda"})

    seq = log_portfolio_sequence(T, seed=seed)
    c = sequence_constants(seq)
    ref = cumulative_saddle(seq)
    onm = make_learner("ommns", seq.domain, c)
    led = regret_report(seq, _run(seq, onm), ref, "final")
    bound = 2 * seq.domain.dim * (1 / c.alpha + c.L0 * c.D) * math.log(T)
    rep.add("ommns_sdualgap", 1, int(led.final("SDualGap") > bound), {"T": T, "seed": seed})
    lhs, rhs = telescoping_bound(onm.trace, onm.A0, onm.state.gamma, ref.z)
    rep.add("telescoping", 1, int(lhs > rhs + 1e-9), {"learner": "ommns"})

    seq = piecewise_sc_sc_sequence(T, segments=3, seed=seed)
    c = sequence_constants(seq)
    agda = make_learner("agda", seq.domain, c, K_cap=100_000)
    bad, _ = agda_contraction(seq, agda)
    rep.add("agda_contraction", T, bad, {"T": T, "seed": seed})
    return rep.result()


# --------------------------------------------------------------------------
# regret ordering


def ordering_violations(led, tol: float = 1e-6) -> int:
    dne, dual, dsp = (led.columns[k] for k in ("DNEReg", "DualGap", "DSPReg"))
    bad = np.sum(dne > dual + tol) + np.sum(dual > dsp + tol)
    for k in ("Reg1", "Reg2"):
        r = led.columns[k]
        m = ~np.isnan(r)
        bad += np.sum(r[m] > dual[m] + tol)
    return int(bad)


def separable_runs(seed: int = 0, T: int = 48):
    """(label, seq, learner name) for the separable runs of the ordering suite."""
    yield "sc-sc", sc_sc_sequence(T, seed=seed, coupling=0.0), "ogda"
    yield "sc-sc", sc_sc_sequence(T, seed=seed, coupling=0.0), "ommns"
    yield "piecewise", piecewise_sc_sc_sequence(T, segments=3, seed=seed, coupling=0.0), "agda"
    yield "piecewise", piecewise_sc_sc_sequence(T, segments=3, seed=seed, coupling=0.0), "ogda"


def suite_ordering(seed: int = 0, T: int = 48) -> dict:
    from ..harness.experiment import sequence_constants
    rep = _Report("ordering", seed)
    for label, seq, name in separable_runs(seed, T):
        c = sequence_constants(seq)
        ref = cumulative_saddle(seq)
        params = {"K_cap": 10_000} if name == "agda" else {}
        lrn = make_learner(name, seq.domain, c, **params)
        led = regret_report(seq, _run(seq, lrn), ref, "all")
        rep.add("dne_le_dual_le_dsp", T, ordering_violations(led),
                {"instance": label, "learner": name, "T": T, "seed": seed})
    return rep.result()


# --------------------------------------------------------------------------
# expert lifetimes


def cover_counts(T: int, K: int) -> tuple[int, int]:
    """(intervals checked, intervals whose chain is longer than the bound)."""
    bad = 0
    for r in range(1, T + 1):
        chain, t = [], r
        while t <= T:
            chain.append(t)
            t = ending_time(t, K)
        links = np.searchsorted(np.array(chain), np.arange(r, T + 1), side="right")
        bounds = np.array([covering_bound(r, s, K) for s in range(r, T + 1)])
        bad += int(np.sum(links > bounds))
    return T * (T + 1) // 2, bad


def suite_mmflh_cover(seed: int = 0, T: int = 512, Ks=(2, 3, 10)) -> dict:
    rep = _Report("mmflh-cover", seed)
    for K in Ks:
        n, bad = cover_counts(T, K)
        rep.add(f"cover_K{K}", n, bad, {"T": T, "K": K})
    return rep.result()


SUITES = {
    "lemmas": suite_lemmas,
    "projections": suite_projections,
    "linalg": suite_linalg,
    "bounds": suite_bounds,
    "ordering": suite_ordering,
    "mmflh-cover": suite_mmflh_cover,
}


def verify(suite_name: str, seed: int = 0) -> dict:
    try:
        fn = SUITES[suite_name]
    except KeyError:
        raise KeyError(f"unknown suite {suite_name!r}; known: {', '.join(SUITES)}") from None
    return fn(seed)
