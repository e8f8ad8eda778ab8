"""Gap functions, regret notions and variation measures.

Everything is measured against the cumulative saddle point (x', y') of the
summed payoffs. The static gap is g'_t(z) = f_t(x, y') - f_t(x', y); the
dynamic gap is the per-round duality gap g*_t(z) = max_y f_t(x, .) - min_x f_t(., y).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .functions import (FunctionSequence, GameFunction, LogPortfolio, QuadraticGame, combine,
                        minimize_convex, minimize_fixed_y_portfolio)

RUNNING = ("SDualGap", "DualGap", "DSPReg", "Reg1", "Reg2", "SNEReg", "DNEReg")
PER_ROUND = ("f", "g_prime", "g_star", "min_g_prime", "nash_value")


@dataclass
class DecisionPoint:
    x: np.ndarray
    y: np.ndarray
    gap: float = 0.0
    exact: bool = True

    def __iter__(self):
        yield self.x
        yield self.y

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])


def cumulative_saddle(seq: FunctionSequence, tol: float = 1e-8) -> DecisionPoint:
    """Saddle point of the averaged payoff (1/T) sum_t f_t."""
    fs = seq.functions()
    avg = combine(fs, np.full(len(fs), 1.0 / len(fs)))
    x, y, _ = avg.saddle()
    gap = max(0.0, avg.duality_gap(np.concatenate([x, y])))
    if gap > tol:
        from .functions import SaddleError
        raise SaddleError("cumulative saddle oracle missed the tolerance", gap)
    return DecisionPoint(np.asarray(x, float), np.asarray(y, float), gap,
                         bool(avg.exact_best_responses))


def static_gap(f_t: GameFunction, z_t, saddle_ref) -> float:
    x_ref, y_ref = saddle_ref
    x, y = f_t.split(z_t)
    return float(f_t.value(x, y_ref) - f_t.value(x_ref, y))


def dynamic_gap(f_t: GameFunction, z_t) -> float:
    return float(f_t.duality_gap(z_t))


def min_static_gap(f_t: GameFunction, saddle_ref) -> float:
    """min_z g'_t(z) = min_x f_t(x, y') - max_y f_t(x', y)."""
    x_ref, y_ref = saddle_ref
    return f_t.min_x(y_ref) - f_t.max_y(x_ref)


def average_iterate_distance(plays, saddle_ref) -> float:
    """Squared distance between the mean play and the saddle point."""
    Z = np.asarray([np.ravel(p) for p in plays], dtype=float)
    ref = np.concatenate([np.ravel(a) for a in saddle_ref])
    diff = Z.mean(axis=0) - ref
    return float(diff @ diff)


# --------------------------------------------------------------------------
# sums of payoffs with one argument frozen per round


class _QuadraticPrefix:
    """Running coefficient sums for sequences of quadratic games."""

    def __init__(self, fs: Sequence[QuadraticGame], plays: np.ndarray, dx: int):
        xs, ys = plays[:, :dx], plays[:, dx:]
        px = np.array([f.px for f in fs])
        py = np.array([f.py for f in fs])
        B = np.stack([f.B for f in fs])
        cx = np.stack([f.cx for f in fs])
        cy = np.stack([f.cy for f in fs])
        c0 = np.array([f.c0 for f in fs])
        self.PX, self.PY = np.cumsum(px), np.cumsum(py)
        self.B, self.CX, self.CY = np.cumsum(B, 0), np.cumsum(cx, 0), np.cumsum(cy, 0)
        self.C0 = np.cumsum(c0)
        # f_s(x, y_s) = (px/2)|x|^2 + x.(B y_s + cx) + rest_y
        self.qx = np.cumsum(np.einsum("tij,tj->ti", B, ys) + cx, 0)
        self.rx = np.cumsum(-0.5 * py * np.sum(ys * ys, 1) + np.sum(cy * ys, 1) + c0)
        # f_s(x_s, y) = -(py/2)|y|^2 + y.(B' x_s + cy) + rest_x
        self.qy = np.cumsum(np.einsum("tij,ti->tj", B, xs) + cy, 0)
        self.ry = np.cumsum(0.5 * px * np.sum(xs * xs, 1) + np.sum(cx * xs, 1) + c0)

    def min_x(self, i, X, y_fixed=None):
        if y_fixed is None:
            P, q, r = self.PX[i], self.qx[i], self.rx[i]
        else:
            P = self.PX[i]
            q = self.B[i] @ y_fixed + self.CX[i]
            r = -0.5 * self.PY[i] * y_fixed @ y_fixed + self.CY[i] @ y_fixed + self.C0[i]
        x = X.project(-q / P)
        return float(0.5 * P * x @ x + q @ x + r)

    def max_y(self, i, Y, x_fixed=None):
        if x_fixed is None:
            P, q, r = self.PY[i], self.qy[i], self.ry[i]
        else:
            P = self.PY[i]
            q = self.B[i].T @ x_fixed + self.CY[i]
            r = 0.5 * self.PX[i] * x_fixed @ x_fixed + self.CX[i] @ x_fixed + self.C0[i]
        y = Y.project(q / P)
        return float(-0.5 * P * y @ y + q @ y + r)

    def game(self, i, domain) -> QuadraticGame:
        return QuadraticGame(self.PX[i], self.PY[i], self.B[i], self.CX[i], self.CY[i],
                             self.C0[i], domain)

    def window_min_gap(self, r, s, X, Y, x_ref, y_ref) -> float:
        """min_z of sum_{r..s} g'_t(z) (0-based, inclusive), in closed form."""
        def d(a):
            return a[s] - a[r - 1] if r > 0 else a[s]
        PX, PY, B, CX, CY = d(self.PX), d(self.PY), d(self.B), d(self.CX), d(self.CY)
        qx = B @ y_ref + CX
        x = X.project(-qx / PX)
        qy = B.T @ x_ref + CY
        y = Y.project(qy / PY)
        # the constant c0 cancels between the two halves
        lo_x = 0.5 * PX * x @ x + qx @ x - 0.5 * PY * y_ref @ y_ref + CY @ y_ref
        hi_y = -0.5 * PY * y @ y + qy @ y + 0.5 * PX * x_ref @ x_ref + CX @ x_ref
        return float(lo_x - hi_y)


def _min_x_frozen(fs, ys, X, x0=None) -> float:
    """min_x sum_s f_s(x, y_s) for non-quadratic rounds."""
    if all(type(f) is LogPortfolio for f in fs):
        C = np.vstack([f.R / y for f, y in zip(fs, ys)])
        w = np.concatenate([f.w for f in fs])
        x = minimize_fixed_y_portfolio(C, w, X)
        return float(-np.log(C @ x) @ w)

    def value(x):
        return sum(float(f.value(x, y)) for f, y in zip(fs, ys))

    def grad(x):
        return sum(f.grad_x(x, y) for f, y in zip(fs, ys))

    x, _ = minimize_convex(value, grad, X.project, X.center() if x0 is None else x0)
    return value(x)


def _max_y_frozen(fs, xs, Y) -> float:
    if all(type(f) is LogPortfolio for f in fs):
        y = Y.upper
        return float(sum(f.value(x, y) for f, x in zip(fs, xs)))

    def value(y):
        return -sum(float(f.value(x, y)) for f, x in zip(fs, xs))

    def grad(y):
        return -sum(f.grad_y(x, y) for f, x in zip(fs, xs))

    y, _ = minimize_convex(value, grad, Y.project, Y.center())
    return -value(y)


# --------------------------------------------------------------------------
# ledger


class RegretLedger:
    """Per-round record plus running regret sums; serializes to CSV."""

    def __init__(self, dx: int, dy: int, columns: dict, meta: dict | None = None):
        self.dx, self.dy = dx, dy
        self.columns = columns
        self.meta = meta or {}

    @property
    def T(self) -> int:
        return len(self.columns["t"])

    def column_names(self) -> list[str]:
        return list(self.columns)

    def final(self, name: str) -> float:
        return float(self.columns[name][-1])

    def summary(self) -> dict:
        out = {name: self.final(name) for name in RUNNING}
        out["T"] = self.T
        out.update({k: v for k, v in self.meta.items() if np.isscalar(v)})
        return out

    def to_csv(self, path) -> None:
        names = self.column_names()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for i in range(self.T):
                row = []
                for n in names:
                    v = self.columns[n][i]
                    if n == "t":
                        row.append(str(int(v)))
                    elif isinstance(v, str):
                        row.append(v)
                    else:
                        row.append(format(float(v), ".17g"))
                w.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "RegretLedger":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        names, body = rows[0], rows[1:]
        cols = {}
        for j, n in enumerate(names):
            vals = [r[j] for r in body]
            if n == "t":
                cols[n] = np.array([int(v) for v in vals])
            elif n == "flags":
                cols[n] = np.array(vals, dtype=object)
            else:
                cols[n] = np.array([float(v) for v in vals])
        dx = sum(1 for n in names if n.startswith("x"))
        dy = sum(1 for n in names if n.startswith("y"))
        return cls(dx, dy, cols)

    def plays(self) -> np.ndarray:
        xs = [self.columns[f"x{i}"] for i in range(self.dx)]
        ys = [self.columns[f"y{i}"] for i in range(self.dy)]
        return np.stack(xs + ys, axis=1)


def _checkpoints(T: int, mode) -> np.ndarray:
    if mode == "all":
        return np.arange(T)
    if mode == "final":
        return np.array([T - 1])
    if mode == "dyadic":
        pts = {T - 1}
        p = 1
        while p <= T:
            pts.add(p - 1)
            p *= 2
        return np.array(sorted(pts))
    return np.array(sorted({int(t) - 1 for t in mode}))


def regret_report(seq: FunctionSequence, plays, saddle_ref, checkpoints="auto") -> RegretLedger:
    """Fill every regret column for a run.

    Reg1, Reg2 and SNEReg need a fresh optimization per prefix. They are
    computed at ``checkpoints`` ('all', 'final', 'dyadic' or explicit rounds)
    and left NaN elsewhere; 'auto' means every round for quadratic
    sequences and dyadic rounds otherwise.
    """
    Z = np.asarray([np.ravel(p) for p in plays], dtype=float)
    T = seq.T
    if len(Z) != T:
        raise ValueError(f"expected {T} plays, got {len(Z)}")
    fs = seq.functions()
    dom = seq.domain
    X, Y = dom.factors
    dx, dy = X.dim, Y.dim
    x_ref, y_ref = saddle_ref
    xs, ys = Z[:, :dx], Z[:, dx:]

    f_val = np.array([float(f.value(x, y)) for f, x, y in zip(fs, xs, ys)])
    g_prime = np.array([float(f.value(x, y_ref) - f.value(x_ref, y)) for f, x, y in zip(fs, xs, ys)])
    g_star = np.array([f.duality_gap(z) for f, z in zip(fs, Z)])
    cache: dict[int, tuple] = {}
    min_gp = np.empty(T)
    nash = np.empty(T)
    for i, f in enumerate(fs):
        key = id(f)
        if key not in cache:
            cache[key] = (min_static_gap(f, saddle_ref), f.saddle()[2])
        min_gp[i], nash[i] = cache[key]

    quad = all(type(f) is QuadraticGame and f.px > 0 and f.py > 0 for f in fs)
    mode = ("all" if quad else "dyadic") if checkpoints == "auto" else checkpoints
    idx = _checkpoints(T, mode)
    cum_f = np.cumsum(f_val)
    reg1 = np.full(T, np.nan)
    reg2 = np.full(T, np.nan)
    sne = np.full(T, np.nan)
    if quad:
        acc = _QuadraticPrefix(fs, Z, dx)
        for i in idx:
            reg1[i] = cum_f[i] - acc.min_x(i, X)
            reg2[i] = acc.max_y(i, Y) - cum_f[i]
            sne[i] = abs(cum_f[i] - acc.game(i, dom).saddle()[2])
    else:
        for i in idx:
            reg1[i] = cum_f[i] - _min_x_frozen(fs[: i + 1], ys[: i + 1], X)
            reg2[i] = _max_y_frozen(fs[: i + 1], xs[: i + 1], Y) - cum_f[i]
            sne[i] = abs(cum_f[i] - combine(fs[: i + 1]).saddle()[2])

    approx = not all(f.exact_best_responses for f in fs)
    cols = {"t": np.arange(1, T + 1)}
    for j in range(dx):
        cols[f"x{j}"] = xs[:, j]
    for j in range(dy):
        cols[f"y{j}"] = ys[:, j]
    cols.update({
        "f": f_val, "g_prime": g_prime, "g_star": g_star, "min_g_prime": min_gp,
        "nash_value": nash,
        "SDualGap": np.cumsum(g_prime),
        "DualGap": np.cumsum(g_star),
        "DSPReg": np.cumsum(g_prime) - np.cumsum(min_gp),
        "Reg1": reg1, "Reg2": reg2, "SNEReg": sne,
        "DNEReg": np.abs(cum_f - np.cumsum(nash)),
        "flags": np.array(["approx" if approx else ""] * T, dtype=object),
    })
    meta = {"approximate_oracles": approx, "checkpoints": mode if isinstance(mode, str) else "custom"}
    return RegretLedger(dx, dy, cols, meta)


# --------------------------------------------------------------------------
# variation measures


@dataclass
class VariationReport:
    U_T: float
    V_T: float
    V_T_prime: float
    C_T: float
    C_T_prime: float
    Delta_T: float
    sampled_points: int = 0
    notes: dict = field(default_factory=dict)


def _gap_on(f: GameFunction, P: np.ndarray) -> np.ndarray:
    x, y = f.split(P)
    try:
        return f.value(x, f.best_response_y(x)) - f.value(f.best_response_x(y), y)
    except Exception:
        return np.array([f.duality_gap(p) for p in P])


def variation_report(seq: FunctionSequence, plays, saddle_ref=None, n_samples: int = 10_000,
                     seed: int = 0) -> VariationReport:
    """Path-length and drift measures of a run.

    Maxima over the domain (U_T, V_T, V_T') are taken over sampled points,
    the domain vertices, every play and every per-round saddle point, so
    they are lower bounds on the true maxima. Rounds whose function object
    is identical to the previous one contribute exactly zero.
    """
    Z = np.asarray([np.ravel(p) for p in plays], dtype=float)
    fs = seq.functions()
    T = seq.T
    dom = seq.domain
    if saddle_ref is None:
        saddle_ref = cumulative_saddle(seq)
    x_ref, y_ref = saddle_ref
    rng = np.random.Generator(np.random.Philox(seed))
    pts = [dom.sample(rng, n_samples), Z]
    verts = dom.vertices()
    if verts is not None and len(verts) <= 4096:
        pts.append(verts)
    uniq = list({id(f): f for f in fs}.values())
    pts.append(np.array([np.concatenate(f.saddle()[:2]) for f in uniq]))
    P = np.vstack(pts)
    Px, Py = dom.split(P)

    vals, gaps, gps = {}, {}, {}

    def cached(f, store, fn):
        if id(f) not in store:
            store[id(f)] = fn(f)
        return store[id(f)]

    U = V = Vp = 0.0
    for t in range(1, T):
        f0, f1 = fs[t - 1], fs[t]
        if f0 is f1:
            continue
        v0 = cached(f0, vals, lambda f: f.value(Px, Py))
        v1 = cached(f1, vals, lambda f: f.value(Px, Py))
        Vp += float(np.max(np.abs(v1 - v0)))
        g0 = cached(f0, gaps, lambda f: _gap_on(f, P))
        g1 = cached(f1, gaps, lambda f: _gap_on(f, P))
        U += max(0.0, float(np.max(g1 - g0)))
        s0 = cached(f0, gps, lambda f: f.value(Px, y_ref) - f.value(x_ref, Py))
        s1 = cached(f1, gps, lambda f: f.value(Px, y_ref) - f.value(x_ref, Py))
        V += float(np.max(np.abs(s1 - s0)))

    dx = dom.factors[0].dim
    xs, ys = Z[:, :dx], Z[:, dx:]
    n = min(len(Z), T)
    C = Cp = 0.0
    for t in range(n - 1):
        f0, f1 = fs[t], fs[t + 1]
        C += float(np.linalg.norm(f1.best_response_x(ys[t + 1]) - f0.best_response_x(ys[t])))
        C += float(np.linalg.norm(f1.best_response_y(xs[t + 1]) - f0.best_response_y(xs[t])))
        Cp += float(np.linalg.norm(f1.best_response_x(ys[t + 1]) - f0.best_response_x(ys[t + 1])))
        Cp += float(np.linalg.norm(f1.best_response_y(xs[t + 1]) - f0.best_response_y(xs[t + 1])))
    delta = float(np.sum(np.linalg.norm(np.diff(Z, axis=0), axis=1))) if len(Z) > 1 else 0.0
    return VariationReport(U, V, Vp, C, Cp, delta, len(P), {"maxima": "sampled lower bounds"})


# --------------------------------------------------------------------------
# strongly adaptive regret


def sasp_regret(seq: FunctionSequence, plays, saddle_ref, max_exhaustive: int = 512) -> dict:
    """max over intervals [r, s] of sum g'_t(z_t) - min_z sum_{r..s} g'_t(z).

    Exhaustive over all intervals when T <= max_exhaustive, otherwise over
    dyadic-length intervals at dyadic offsets (flagged).
    """
    Z = np.asarray([np.ravel(p) for p in plays], dtype=float)
    fs = seq.functions()
    T = seq.T
    X, Y = seq.domain.factors
    dx = X.dim
    x_ref, y_ref = (np.asarray(a, float) for a in saddle_ref)
    gp = np.array([float(f.value(z[:dx], y_ref) - f.value(x_ref, z[dx:])) for f, z in zip(fs, Z)])
    cum = np.concatenate([[0.0], np.cumsum(gp)])
    exhaustive = T <= max_exhaustive
    if exhaustive:
        intervals = [(r, s) for r in range(T) for s in range(r, T)]
    else:
        intervals = []
        L = 1
        while L <= T:
            intervals += [(r, r + L - 1) for r in range(0, T - L + 1, max(1, L // 2))]
            L *= 2
    quad = all(type(f) is QuadraticGame and f.px > 0 and f.py > 0 for f in fs)
    acc = _QuadraticPrefix(fs, Z, dx) if quad else None
    best, arg = -np.inf, None
    for r, s in intervals:
        if quad:
            lo = acc.window_min_gap(r, s, X, Y, x_ref, y_ref)
        else:
            g = combine(fs[r: s + 1])
            lo = g.min_x(y_ref) - g.max_y(x_ref)
        val = cum[s + 1] - cum[r] - lo
        if val > best:
            best, arg = val, (r + 1, s + 1)
    return {"value": float(best), "interval": arg, "exhaustive": exhaustive,
            "intervals": len(intervals)}


# --------------------------------------------------------------------------
# online VI objective


def vi_regret(seq: FunctionSequence, plays, points, chunk: int = 20_000) -> dict:
    """max over candidate points z of sum_t <F_t(z), z_t - z>.

    ``points`` is an (n, d) array of comparators, usually a grid; the sum is
    accumulated round by round so memory stays O(n d).
    """
    Z = np.asarray([np.ravel(p) for p in plays], dtype=float)
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[1] != Z.shape[1]:
        raise ValueError("comparators and plays have different dimensions")
    total = np.zeros(len(P))
    fs = seq.functions(len(Z))
    for lo in range(0, len(P), chunk):
        Q = P[lo: lo + chunk]
        acc = np.zeros(len(Q))
        for f, z in zip(fs, Z):
            acc += np.sum(f.operator(Q) * (z - Q), axis=-1)
        total[lo: lo + chunk] = acc
    k = int(np.argmax(total))
    return {"value": float(total[k]), "argmax": P[k], "points": len(P)}
