"""Sleeping-experts meta-learner for dynamic saddle-point regret.

A fresh base learner is started every round and retired at its ending
time. Alive experts are mixed with exponential weights on the static gap
g'_t(z) = f_t(x, y') - f_t(x', y), which needs the cumulative saddle point
(x', y') up front.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .functions import SEPARABLE, GameFunction
from .learners import Learner

WEIGHT_TOL = 1e-10


def _valuation(t: int, K: int) -> int:
    k = 0
    while t % K == 0:
        t //= K
        k += 1
    return k


def ending_time(t: int, K: int) -> int:
    """First multiple of K^(k+1) after t, where K^k is the largest power of K dividing t.

    For K = 2 this is t + 2^k. Along any chain t_{j+1} = E_K(t_j) the
    valuation strictly increases, so segment lengths grow by a factor K and
    any interval [r, s] is covered by at most ceil(log_K(s-r+1)) + 1 links.
    """
    if t < 1 or K < 2:
        raise ValueError("need t >= 1 and K >= 2")
    step = K ** (_valuation(t, K) + 1)
    return (t // step + 1) * step


def covering_segments(r: int, s: int, K: int) -> list[tuple[int, int]]:
    """Chain of expert lifetimes [t_j, E_K(t_j) - 1] starting at r and reaching s."""
    if not 1 <= r <= s:
        raise ValueError("need 1 <= r <= s")
    segs, t = [], r
    while t <= s:
        e = ending_time(t, K)
        segs.append((t, min(e - 1, s)))
        t = e
    return segs


def covering_bound(r: int, s: int, K: int) -> int:
    """ceil(log_K(s - r + 1)) + 1 computed in integers."""
    n, j, p = s - r + 1, 0, 1
    while p < n:
        p *= K
        j += 1
    return j + 1


class StaticGapGame(GameFunction):
    """Separable game h(x, y) = f(x, y') + f(x', y) whose operator is grad g'.

    Running a base learner on h is online gradient descent on the static
    gap g'_t(z) = h(x, y') - h(x', y) = f(x, y') - f(x', y) itself.
    """

    name = "static-gap"

    def __init__(self, f: GameFunction, x_ref, y_ref):
        super().__init__(f.domain)
        self.f = f
        self.x_ref = np.asarray(x_ref, dtype=float)
        self.y_ref = np.asarray(y_ref, dtype=float)

    def value(self, x, y):
        return self.f.value(x, self.y_ref) + self.f.value(self.x_ref, y)

    def grad_x(self, x, y):
        return self.f.grad_x(x, np.broadcast_to(self.y_ref, np.shape(y)))

    def grad_y(self, x, y):
        return self.f.grad_y(np.broadcast_to(self.x_ref, np.shape(x)), y)

    @property
    def tags(self):
        return self.f.tags | {SEPARABLE}

    def best_response_x(self, y):
        return self.f.best_response_x(self.y_ref)

    def best_response_y(self, x):
        return self.f.best_response_y(self.x_ref)

    def _compute_constants(self):
        return self.f.constants


@dataclass
class Expert:
    birth: int
    ending_time: int
    base: Learner
    weight: float
    point: np.ndarray = field(default=None)


class MMFLH:
    """Meta-learner over base learners produced by ``factory()``.

    ``alpha`` is the exponential-weights rate; losses are clipped to
    ``[-clip, clip]`` and clip events are counted. ``feed`` selects what the
    base learners see: the revealed payoff f_t ("payoff") or the static-gap
    game built from f_t and (x', y') ("gap").
    """

    name = "mmflh"

    def __init__(self, domain, saddle_ref, factory: Callable[[], Learner], K: int = 2,
                 alpha: float = 1.0, clip: float = np.inf, feed: str = "payoff"):
        if saddle_ref is None:
            raise ValueError("the cumulative saddle point must be provided")
        if K < 2:
            raise ValueError("K must be at least 2")
        if feed not in ("payoff", "gap"):
            raise ValueError(f"feed must be 'payoff' or 'gap', got {feed!r}")
        self.feed = feed
        x_ref, y_ref = saddle_ref
        self.x_ref = np.asarray(x_ref, dtype=float)
        self.y_ref = np.asarray(y_ref, dtype=float)
        self.domain = domain
        self.factory = factory
        self.K = int(K)
        self.alpha = float(alpha)
        self.clip = float(clip)
        self.t = 0
        self.pool: list[Expert] = []
        self.clip_events = 0
        self._played = None

    def alive_weights(self) -> np.ndarray:
        return np.array([e.weight for e in self.pool])

    def play(self) -> np.ndarray:
        self.t += 1
        t = self.t
        self.pool = [e for e in self.pool if e.ending_time > t]
        if self.pool:
            total = sum(e.weight for e in self.pool)
            for e in self.pool:
                e.weight = e.weight / total * (1.0 - 1.0 / t)
        # the newcomer takes all the mass if every earlier expert has retired
        self.pool.append(Expert(t, ending_time(t, self.K), self.factory(),
                                1.0 / t if self.pool else 1.0))
        for e in self.pool:
            e.point = e.base.play()
        w = self.alive_weights()
        w = w / w.sum()
        self._played = w @ np.stack([e.point for e in self.pool])
        return self._played.copy()

    def static_gap(self, f: GameFunction, z) -> float:
        x, y = f.split(z)
        return float(f.value(x, self.y_ref) - f.value(self.x_ref, y))

    def update(self, f: GameFunction) -> None:
        if self._played is None:
            raise RuntimeError("update called before play")
        losses = np.array([self.static_gap(f, e.point) for e in self.pool])
        clipped = np.clip(losses, -self.clip, self.clip)
        self.clip_events += int(np.sum(clipped != losses))
        w = self.alive_weights()
        w = w / w.sum()
        # shifting by the min loss leaves the normalized weights unchanged
        w = w * np.exp(-self.alpha * (clipped - clipped.min()))
        w /= w.sum()
        seen = StaticGapGame(f, self.x_ref, self.y_ref) if self.feed == "gap" else f
        for e, wi in zip(self.pool, w):
            e.weight = float(wi)
            e.base.update(seen)
        self._played = None


def mmflh_round(state: MMFLH, f_t: GameFunction):
    """Play, observe f_t, update; returns (played point, state)."""
    z = state.play()
    state.update(f_t)
    return z, state


def default_alpha(constants, base: str) -> float:
    """Exp-weights rate: gamma/4 for Newton bases, lambda/(2 L0^2) for OGDA bases."""
    if base == "ogda":
        return constants.lam / (2.0 * constants.L0 ** 2)
    return constants.gamma / 4.0


def default_K(T: int) -> int:
    return max(2, math.ceil(math.sqrt(T)))
