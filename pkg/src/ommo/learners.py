"""Online learners for min-max games.

All LRA-family rules share one move: grow the regularity matrix, take a
preconditioned step ``u = z - A^{-1} F / gamma`` and project back in the
A-norm. OGDA uses ``A_t = tI``, the online Newton variant adds ``F F'``,
the online VI rule adds the block matrix of a split. Alternating GDA runs
an adaptive inner loop on each revealed function instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .functions import FunctionConstants, GameFunction
from .geometry import Domain, Product, project_weighted
from .linalg import (RegularityMatrix, Split, add_psd, block_update, init_regularity,
                     rank_one_update, scalar_update)

FEAS_TOL = 1e-8
VI_TOL = 1e-7


class VIResidualError(RuntimeError):
    def __init__(self, residual: float, witness):
        super().__init__(f"auxiliary VI residual {residual:.3e} at z={np.round(witness, 6)}")
        self.residual = residual
        self.witness = witness


@dataclass
class TraceRow:
    z: np.ndarray          # point at which F was evaluated (z_t)
    F: np.ndarray
    inv_quad: float        # F' A_t^{-1} F
    M: np.ndarray          # A_t - A_{t-1}


@dataclass
class LearnerState:
    z: np.ndarray
    A: RegularityMatrix
    t: int
    gamma: float
    domain: Domain
    variant: str
    config: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)  # shared run history, appended in place

    @property
    def d(self) -> int:
        return self.z.size


def default_start(domain: Domain) -> np.ndarray:
    return domain.center()


def new_state(domain: Domain, variant: str, gamma: float, epsilon: float = 1.0,
              z0=None, **config) -> LearnerState:
    z = default_start(domain) if z0 is None else np.asarray(z0, dtype=float)
    if not domain.contains(z, FEAS_TOL):
        raise ValueError("starting point is outside the domain")
    return LearnerState(z.copy(), init_regularity(domain.dim, epsilon), 1, float(gamma),
                        domain, variant, dict(config))


def _weight(A: RegularityMatrix):
    return A.scalar if A.scalar is not None else A


def _move(state: LearnerState, F, A_new: RegularityMatrix) -> LearnerState:
    F = np.asarray(F, dtype=float)
    step = A_new.solve(F)
    u = state.z - step / state.gamma
    z_new = project_weighted(u, _weight(A_new), state.domain)
    state.trace.append(TraceRow(state.z.copy(), F.copy(), float(F @ step), A_new.A - state.A.A))
    return replace(state, z=z_new, A=A_new, t=state.t + 1)


def lra_step(state: LearnerState, F_t, M_t) -> LearnerState:
    """Generic rule: A += M, u = z - A^{-1}F/gamma, project in the A-norm."""
    return _move(state, F_t, add_psd(state.A, M_t))


def ogda_step(state: LearnerState, F_t) -> LearnerState:
    """A_t = tI, so u = z - F/(lambda t)."""
    return _move(state, F_t, scalar_update(state.A, float(state.t)))


def ommns_step(state: LearnerState, F_t) -> LearnerState:
    """A_t = A_{t-1} + F F'."""
    return _move(state, F_t, rank_one_update(state.A, F_t))


def online_vi_step(state: LearnerState, F_t_at_prev, n_checks: int = 16) -> LearnerState:
    """A += M_s(F) for the state's split, then the weighted projection.

    The projected point solves the auxiliary strongly monotone VI
    <F + gamma A (z' - z), z' - w> <= 0 for all w; this is re-checked on the
    domain vertices and a few random points.
    """
    split = state.config["split"]
    F = np.asarray(F_t_at_prev, dtype=float)
    A_new = block_update(state.A, F, split)
    z_prev = state.z
    new = _move(state, F, A_new)
    lin = F + state.gamma * (A_new.A @ (new.z - z_prev))
    rng = np.random.Generator(np.random.Philox([state.t, 7]))
    probes = state.domain.sample(rng, n_checks)
    verts = state.domain.vertices()
    if verts is not None and len(verts) <= 256:
        probes = np.vstack([probes, verts])
    res = (new.z - probes) @ lin
    worst = int(np.argmax(res))
    scale = max(1.0, float(np.linalg.norm(lin)) * state.domain.diameter())
    if res[worst] > VI_TOL * scale:
        raise VIResidualError(float(res[worst]), probes[worst])
    return new


# --------------------------------------------------------------------------
# alternating gradient descent ascent


@dataclass(frozen=True)
class AGDAConfig:
    mu1: float
    mu2: float
    L1: float
    K_cap: int = 64

    def __post_init__(self):
        if min(self.mu1, self.mu2, self.L1) <= 0:
            raise ValueError("PL parameters and smoothness must be positive")
        if not 0 < self.rho < 1:
            raise ValueError(f"contraction factor rho={self.rho} outside (0, 1)")
        if self.K_cap < 1:
            raise ValueError("K_cap must be at least 1")

    @property
    def tau1(self) -> float:
        return self.mu2 / (18.0 * self.L1 ** 3)

    @property
    def tau2(self) -> float:
        return 1.0 / self.L1

    @property
    def L(self) -> float:
        return self.L1 + self.L1 ** 2 / self.mu2

    @property
    def rho(self) -> float:
        return 1.0 - self.mu1 * self.mu2 ** 2 / (36.0 * self.L ** 3)

    @property
    def beta(self) -> float:
        c = 4.0 * self.L1 ** 2 * self.tau1 ** 2
        return max((c + 1.0) * 2.0 * self.L ** 2 / self.mu1,
                   10.0 * (c + 3.0) * 2.0 * self.L1 ** 2 / self.mu2)

    @classmethod
    def from_constants(cls, c: FunctionConstants, K_cap: int = 64) -> "AGDAConfig":
        return cls(c.mu1, c.mu2, c.L1, K_cap)


def agda_inner(f: GameFunction, x, y, tau1, tau2, K, domain: Product | None = None):
    """K alternating steps: x moves first, then y uses the new x."""
    X, Y = (domain or f.domain).factors
    x = np.asarray(x, dtype=float).copy()
    y = np.asarray(y, dtype=float).copy()
    for _ in range(K):
        x = X.project(x - tau1 * f.grad_x(x, y))
        y = Y.project(y + tau2 * f.grad_y(x, y))
    return x, y


def agda_iterations(f: GameFunction, x, y, cfg: AGDAConfig) -> tuple[int, int]:
    """(requested K_t, used K_t) from the current gap and the saddle value."""
    max_y = f.max_y(x)
    gap = max_y - f.min_x(y)
    a = max_y - f.saddle()[2]
    b = max_y - float(f.value(x, y))
    denom = 4.0 * cfg.beta * (a + b / 10.0)
    if gap <= 0 or denom <= 1e-12:
        return 1, 1
    ratio = gap / denom
    k = math.ceil(math.log(ratio) / math.log(cfg.rho)) if ratio < 1 else 1
    k = max(1, k)
    return k, min(k, cfg.K_cap)


def agda_round(state: LearnerState, f_t: GameFunction) -> tuple[LearnerState, int]:
    cfg: AGDAConfig = state.config["agda"]
    for oracle in ("best_response_x", "best_response_y", "saddle"):
        if not hasattr(f_t, oracle):
            raise AttributeError(f"online AGDA needs the {oracle} oracle")
    x, y = f_t.split(state.z)
    k_req, k = agda_iterations(f_t, x, y, cfg)
    x, y = agda_inner(f_t, x, y, cfg.tau1, cfg.tau2, k, state.domain)
    state.trace.append({"t": state.t, "K_requested": k_req, "K": k, "capped": k_req > k})
    return replace(state, z=np.concatenate([x, y]), t=state.t + 1), k


# --------------------------------------------------------------------------
# online protocol wrappers


class Learner:
    """Act-then-observe wrapper around a state and a step rule."""

    name = "learner"

    def __init__(self, state: LearnerState):
        self.state = state
        self.A0 = state.A.A.copy()

    def play(self) -> np.ndarray:
        return self.state.z.copy()

    def update(self, f: GameFunction) -> None:
        raise NotImplementedError

    @property
    def trace(self):
        return self.state.trace


class OGDA(Learner):
    name = "ogda"

    def __init__(self, domain, lam, z0=None, gamma=None):
        super().__init__(new_state(domain, "ogda", lam if gamma is None else gamma, 1.0, z0))

    def update(self, f):
        self.state = ogda_step(self.state, f.operator(self.state.z))


class OMMNS(Learner):
    name = "ommns"

    def __init__(self, domain, L0, D, alpha, z0=None, epsilon=None, gamma=None):
        gamma = 0.5 * min(1.0 / (L0 * D), alpha) if gamma is None else gamma
        eps = 1.0 / (gamma * D) ** 2 if epsilon is None else epsilon
        super().__init__(new_state(domain, "ommns", gamma, eps, z0))
        self.epsilon = eps

    def update(self, f):
        self.state = ommns_step(self.state, f.operator(self.state.z))


class OnlineVI(Learner):
    name = "online-vi"

    def __init__(self, domain, split, L0, D, alpha, z0=None, epsilon=None, gamma=None):
        gamma = 0.5 * min(1.0 / (L0 * D), alpha) if gamma is None else gamma
        eps = 1.0 / (gamma * D) ** 2 if epsilon is None else epsilon
        split = split if isinstance(split, Split) else Split(tuple(split))
        if split.d != domain.dim:
            raise ValueError("split does not cover the domain dimension")
        super().__init__(new_state(domain, "online-vi", gamma, eps, z0, split=split))
        self.epsilon = eps

    def update(self, f):
        self.state = online_vi_step(self.state, f.operator(self.state.z))


class LRA(Learner):
    """Template learner with a user-supplied regularity rule M(z, F)."""

    name = "lra"

    def __init__(self, domain, gamma, M_rule: Callable, epsilon=1.0, z0=None):
        super().__init__(new_state(domain, "lra", gamma, epsilon, z0))
        self.M_rule = M_rule

    def update(self, f):
        F = f.operator(self.state.z)
        self.state = lra_step(self.state, F, self.M_rule(self.state.z, F))


class AGDA(Learner):
    name = "agda"

    def __init__(self, domain, config: AGDAConfig, z0=None):
        super().__init__(new_state(domain, "agda", 1.0, 1.0, z0, agda=config))
        self.config = config

    def update(self, f):
        self.state, _ = agda_round(self.state, f)

    @property
    def cap_hits(self) -> int:
        return sum(1 for row in self.trace if row["capped"])


class Constant(Learner):
    """Plays a fixed point every round."""

    name = "constant"

    def __init__(self, domain, z0=None):
        super().__init__(new_state(domain, "constant", 1.0, 1.0, z0))

    def update(self, f):
        self.state = replace(self.state, t=self.state.t + 1)


def telescoping_bound(trace, A0, gamma, z_ref):
    """Both sides of the LRA telescoping inequality for comparator z_ref.

    lhs = sum F_t'(z_t - z'); rhs = (1/2g) sum F'A_t^{-1}F
    + (g/2) sum (z_t - z')'M_t(z_t - z') + (g/2)(z_1 - z')'A_0(z_1 - z').
    """
    z_ref = np.asarray(z_ref, dtype=float)
    lhs = sum(float(r.F @ (r.z - z_ref)) for r in trace)
    rhs = sum(r.inv_quad for r in trace) / (2.0 * gamma)
    rhs += 0.5 * gamma * sum(float((r.z - z_ref) @ r.M @ (r.z - z_ref)) for r in trace)
    d1 = trace[0].z - z_ref
    rhs += 0.5 * gamma * float(d1 @ A0 @ d1)
    return lhs, rhs


def make_learner(name: str, domain: Product, constants: FunctionConstants | None = None,
                 **params) -> Learner:
    """Build a learner by registry name, filling step scales from constants."""
    c = constants
    if name == "ogda":
        return OGDA(domain, params.pop("lam", c.lam if c else 1.0), **params)
    if name == "ommns":
        return OMMNS(domain, params.pop("L0", c.L0 if c else None), params.pop("D", domain.diameter()),
                     params.pop("alpha", c.alpha if c else None), **params)
    if name == "online-vi":
        split = params.pop("split", domain.sizes)
        return OnlineVI(domain, split, params.pop("L0", c.L0 if c else None),
                        params.pop("D", domain.diameter()),
                        params.pop("alpha", c.alpha if c else None), **params)
    if name == "agda":
        k_cap = int(params.pop("K_cap", 64))
        cfg = AGDAConfig(params.pop("mu1", c.mu1 if c else None),
                         params.pop("mu2", c.mu2 if c else None),
                         params.pop("L1", c.L1 if c else None), k_cap)
        return AGDA(domain, cfg, **params)
    if name == "lra":
        gamma = params.pop("gamma", c.gamma if c else 1.0)
        rule = params.pop("M_rule", lambda z, F: np.outer(F, F))
        return LRA(domain, gamma, rule, **params)
    if name == "constant":
        return Constant(domain, **params)
    raise KeyError(f"unknown learner {name!r}")


LEARNER_NAMES = ("ogda", "ommns", "agda", "online-vi", "lra", "constant")
