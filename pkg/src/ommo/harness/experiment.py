"""Experiment runner: build the instance and learner, play T rounds, measure.

The round protocol is act-then-observe: the learner commits to z_t, then
the environment reveals f_t. Oblivious sequences could be drawn up front;
adaptive ones (dyne) build f_t from the revealed play. Both go through the
same loop and the summary records which kind was used.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..functions import (FunctionConstants, FunctionSequence, OracleError, SaddleError,
                         build_instance)
from ..geometry import NotPSDError, ProjectionError
from ..learners import (AGDA, VIResidualError, make_learner, telescoping_bound)
from ..linalg import SingularMatrixError
from ..meta import MMFLH, default_alpha, default_K
from ..metrics import (DecisionPoint, RegretLedger, average_iterate_distance, cumulative_saddle,
                       regret_report, variation_report, vi_regret)
from .config import ConfigError, ExperimentConfig

OUTPUT_ENV = "OMMO_OUTPUT_DIR"
FEAS_TOL = 1e-8
NUMERIC_ERRORS = (SaddleError, OracleError, ProjectionError, SingularMatrixError,
                  VIResidualError, NotPSDError, np.linalg.LinAlgError, FloatingPointError)


class InvariantError(RuntimeError):
    """A run or suite broke an invariant (CLI exit code 4)."""

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report or {}


def sequence_constants(seq: FunctionSequence, functions=None) -> FunctionConstants:
    """Worst-case constants over the distinct functions of a sequence."""
    fs = functions if functions is not None else seq.functions()
    uniq = list({id(f): f for f in fs}.values())
    cs = [f.constants for f in uniq]
    sources = {}
    for c in cs:
        for k, v in c.sources.items():
            sources.setdefault(k, set()).add(v)
    return FunctionConstants(
        L0=max(c.L0 for c in cs), L1=max(c.L1 for c in cs), lam=min(c.lam for c in cs),
        alpha=min(c.alpha for c in cs), mu1=min(c.mu1 for c in cs), mu2=min(c.mu2 for c in cs),
        D=seq.domain.diameter(), sources={k: "/".join(sorted(v)) for k, v in sources.items()})


def _probe_dyne_constants(cfg: ExperimentConfig) -> FunctionConstants:
    # adaptive rounds are unknown in advance; bound them using corner plays
    params = {k: v for k, v in cfg.instance_params.items() if k != "action_feed"}
    hw = float(params.get("half_width", 2.0))
    fs = []
    for sx in (-hw, hw):
        for sy in (-hw, hw):
            probe = build_instance("dyne", 2, action_feed=lambda t, p=(sx, sy): p, **params)
            fs += probe.functions()
    return sequence_constants(probe, fs)


def build_sequence(cfg: ExperimentConfig, feed=None) -> FunctionSequence:
    params = dict(cfg.instance_params)
    try:
        if cfg.instance == "dyne":
            return build_instance("dyne", cfg.T, action_feed=feed, **params)
        return build_instance(cfg.instance, cfg.T, seed=cfg.seed, **params)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"instance {cfg.instance!r}: {exc}") from exc


def build_learner(cfg: ExperimentConfig, domain, constants, saddle_ref=None):
    params = dict(cfg.algorithm_params)
    for key in ("z0", "split"):
        if key in params and not isinstance(params[key], list):
            params[key] = [params[key]]
    try:
        if cfg.algorithm != "mmflh":
            return make_learner(cfg.algorithm, domain, constants, **params)
        base = str(params.pop("base", "ogda"))
        if base == "mmflh":
            raise ConfigError("mmflh cannot be its own base learner")
        K = params.pop("K", 2)
        K = default_K(cfg.T) if K == "auto" else int(K)
        alpha = params.pop("alpha", None)
        alpha = default_alpha(constants, base) if alpha is None else float(alpha)
        clip = params.pop("clip", None)
        clip = 2.0 * constants.L0 * constants.D if clip is None else float(clip)
        feed = str(params.pop("feed", "payoff"))
        make_learner(base, domain, constants, **params)  # fail fast on bad base params
        return MMFLH(domain, saddle_ref, lambda: make_learner(base, domain, constants, **params),
                     K=K, alpha=alpha, clip=clip, feed=feed)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"algorithm {cfg.algorithm!r}: {exc}") from exc


def play_rounds(seq: FunctionSequence, learner, plays: list | None = None):
    """Act-then-observe loop. Returns (plays, per-round flags)."""
    plays = [] if plays is None else plays
    flags = []
    dom = seq.domain
    for t in range(1, seq.T + 1):
        z = np.asarray(learner.play(), dtype=float)
        if not dom.contains(z, FEAS_TOL):
            raise InvariantError(f"round {t}: play left the domain", {"t": t, "z": z.tolist()})
        plays.append(z)
        clips = getattr(learner, "clip_events", 0)
        learner.update(seq.at(t))
        events = []
        if getattr(learner, "clip_events", 0) > clips:
            events.append("clip")
        if isinstance(learner, AGDA) and learner.trace[-1]["capped"]:
            events.append("cap")
        flags.append(";".join(events))
    return plays, flags


def _merge_flags(ledger: RegretLedger, flags) -> None:
    old = ledger.columns["flags"]
    ledger.columns["flags"] = np.array(
        [";".join(p for p in (a, b) if p) for a, b in zip(old, flags)], dtype=object)


def bound_summary(cfg, seq, ledger, learner, constants, saddle_ref, plays) -> dict:
    """Run-specific theoretical reference quantity and the measured ratio."""
    T, d = cfg.T, seq.domain.dim
    c = constants
    name = cfg.algorithm
    out: dict = {}
    if name == "ogda":
        out = {"metric": "SDualGap", "bound": c.L0 ** 2 / c.lam * math.log(T)}
    elif name in ("ommns", "lra"):
        out = {"metric": "SDualGap", "bound": 2 * d * (1 / c.alpha + c.L0 * c.D) * math.log(T)}
    elif name == "online-vi":
        grid = seq.domain.grid(int(cfg.algorithm_params.get("grid", 21)))
        vi = vi_regret(seq, plays, grid)
        out = {"metric": "VIRegret", "value": vi["value"],
               "bound": (1 / c.alpha + c.L0 * c.D) * (d * math.log(T) + 1)}
    elif name == "agda":
        vr = variation_report(seq, plays, saddle_ref, n_samples=2000, seed=cfg.seed)
        f1, fT = seq.at(1), seq.at(T)
        z_next = learner.state.z
        g1 = f1.duality_gap(plays[0])
        gT = fT.duality_gap(z_next)
        out = {"metric": "DualGap", "bound": 2 * vr.U_T + 2 * (g1 - gT), "U_T": vr.U_T,
               "cap_hits": learner.cap_hits}
    elif name == "mmflh":
        vr = variation_report(seq, plays, saddle_ref, n_samples=2000, seed=cfg.seed)
        out = {"metric": "DSPReg", "V_T": vr.V_T, "clip_events": learner.clip_events,
               "bound": max(math.log(T), math.sqrt(T * vr.V_T * math.log(T)))}
    if not out:
        return {}
    value = out["value"] if "value" in out else ledger.final(out["metric"])
    out["value"] = float(value)
    out["ratio"] = float(value / out["bound"]) if out["bound"] > 0 else math.inf
    return out


def output_dir(cfg: ExperimentConfig, out=None) -> Path | None:
    target = out or cfg.out or os.environ.get(OUTPUT_ENV)
    return Path(target) if target else None


def run_stem(cfg: ExperimentConfig) -> str:
    which = cfg.instance_params.get("which")
    inst = cfg.instance + (f"{which}" if which is not None else "")
    return f"{inst}_{cfg.algorithm}_T{cfg.T}_s{cfg.seed}"


def run_experiment(cfg: ExperimentConfig, out=None, write: bool = True) -> RegretLedger:
    """Play one configured experiment and return its regret ledger.

    The cumulative saddle point is computed before the first round for
    oblivious sequences. Outputs go to ``out``, ``cfg.out`` or
    $OMMO_OUTPUT_DIR, in that order; nothing is written if none is set.
    """
    tol = float(cfg.tolerances.get("saddle", 1e-8))
    plays: list = []
    if cfg.instance == "dyne":
        def feed(t):
            z = plays[t - 1]
            return z[:1], z[1:]
        seq = build_sequence(cfg, feed)
        constants = _probe_dyne_constants(cfg)
        saddle_ref = None
    else:
        seq = build_sequence(cfg)
        constants = sequence_constants(seq)
        saddle_ref = cumulative_saddle(seq, tol)
    learner = build_learner(cfg, seq.domain, constants, saddle_ref)
    plays, flags = play_rounds(seq, learner, plays)
    if saddle_ref is None:
        saddle_ref = cumulative_saddle(seq, tol)
    ledger = regret_report(seq, plays, saddle_ref, cfg.checkpoints)
    _merge_flags(ledger, flags)

    meta = ledger.meta
    meta.update({
        "instance": cfg.instance, "algorithm": cfg.algorithm, "seed": cfg.seed,
        "protocol": "adaptive" if seq.adaptive else "oblivious",
        "saddle_gap": saddle_ref.gap, "saddle_exact": saddle_ref.exact,
        "avg_iterate_sq_dist": average_iterate_distance(plays, saddle_ref),
        "constants": {k: v for k, v in asdict(constants).items()},
    })
    if hasattr(learner, "epsilon"):
        meta["epsilon"] = learner.epsilon
    if hasattr(learner, "state") and getattr(learner.state, "gamma", None) is not None:
        meta["gamma"] = learner.state.gamma
    if cfg.algorithm in ("ogda", "ommns", "online-vi", "lra"):
        lhs, rhs = telescoping_bound(learner.trace, learner.A0, learner.state.gamma, saddle_ref.z)
        meta["telescoping_lhs"], meta["telescoping_rhs"] = lhs, rhs
        if lhs > rhs + 1e-8 * max(1.0, abs(rhs)):
            raise InvariantError("telescoping inequality failed", {"lhs": lhs, "rhs": rhs})
    meta["bound"] = bound_summary(cfg, seq, ledger, learner, constants, saddle_ref, plays)
    ledger.learner = learner
    ledger.saddle_ref = saddle_ref

    if cfg.suites:
        from .suites import verify
        for name in cfg.suites:
            rep = verify(name, cfg.seed)
            if not rep["passed"]:
                raise InvariantError(f"suite {name!r} failed", rep)
        meta["suites"] = list(cfg.suites)

    target = output_dir(cfg, out)
    if write and target is not None:
        target.mkdir(parents=True, exist_ok=True)
        stem = run_stem(cfg)
        ledger.to_csv(target / f"{stem}.csv")
        summary = ledger.summary()
        summary.update({k: meta[k] for k in ("constants", "bound")})
        (target / f"{stem}.summary.json").write_text(json.dumps(summary, indent=2, default=_jsonable))
    return ledger


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return str(v)


def sweep(cfg: ExperimentConfig, param: str, values, out=None) -> list[dict]:
    """One run per value of ``param``; returns summary rows and writes a table."""
    rows = []
    for v in values:
        ledger = run_experiment(cfg.with_params(**{param: v}), out)
        b = ledger.meta.get("bound", {})
        rows.append({param: v, "metric": b.get("metric", ""), "value": b.get("value", math.nan),
                     "bound": b.get("bound", math.nan), "ratio": b.get("ratio", math.nan)})
    target = output_dir(cfg, out)
    if target is not None:
        target.mkdir(parents=True, exist_ok=True)
        lines = [",".join(rows[0])] if rows else []
        lines += [",".join(format(x, ".17g") if isinstance(x, float) else str(x) for x in r.values())
                  for r in rows]
        (target / f"sweep_{cfg.instance}_{cfg.algorithm}_{param}.csv").write_text("\n".join(lines) + "\n")
    return rows


def format_table(rows: list[dict]) -> str:
    if not rows:
        return ""
    keys = list(rows[0])
    cells = [[k for k in keys]] + [[f"{r[k]:.6g}" if isinstance(r[k], float) else str(r[k])
                                    for k in keys] for r in rows]
    widths = [max(len(c[i]) for c in cells) for i in range(len(keys))]
    return "\n".join("  ".join(c[i].rjust(widths[i]) for i in range(len(keys))) for c in cells)
