"""Per-round payoff functions f_t(x, y) and sequences of them.

A game function bundles the oracles every learner and metric needs: value,
partial gradients, the operator F(z) = (grad_x f, -grad_y f), best
responses, a saddle point and the class constants. Quadratic games and
log-portfolio games have closed-form best responses; anything else falls
back to a projected-gradient inner solver and is flagged approximate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .geometry import Box, Domain, Product, Simplex

CONVEX_CONCAVE = "convex-concave"
STRONGLY_CONVEX_CONCAVE = "strongly-convex-concave"
MIN_MAX_EC = "min-max-ec"
TWO_SIDED_PL = "two-sided-pl"
SEPARABLE = "separable"

INNER_TOL = 1e-9
INNER_MAX_ITER = 5000
SAMPLE_SIZE = 10_000
SAFETY = 1.1


class OracleError(RuntimeError):
    pass


class SaddleError(RuntimeError):
    def __init__(self, message: str, gap: float):
        super().__init__(f"{message} (gap={gap:.3e})")
        self.gap = gap


@dataclass
class FunctionConstants:
    L0: float
    L1: float
    lam: float = 0.0
    alpha: float = 0.0
    mu1: float = 0.0
    mu2: float = 0.0
    D: float = 0.0
    sources: dict = field(default_factory=dict)

    @property
    def gamma(self) -> float:
        """Step scale 1/2 min{1/(L0 D), alpha} used by Newton-type learners."""
        return 0.5 * min(1.0 / (self.L0 * self.D), self.alpha)


# --------------------------------------------------------------------------
# numeric inner solver


def minimize_convex(value, grad, project, x0, tol=INNER_TOL, max_iter=INNER_MAX_ITER):
    """Accelerated projected gradient with backtracking and restart.

    Returns ``(x, converged)``. Convergence is measured by the norm of the
    gradient mapping step ``x - P(x - g/L)``.
    """
    x = project(np.asarray(x0, dtype=float))
    y, x_prev, tk, L = x.copy(), x.copy(), 1.0, 1.0
    fx = value(x)
    for _ in range(max_iter):
        gy, fy = grad(y), value(y)
        while True:
            x_new = project(y - gy / L)
            diff = x_new - y
            f_new = value(x_new)
            if f_new <= fy + gy @ diff + 0.5 * L * (diff @ diff) + 1e-15 * abs(fy):
                break
            L *= 2.0
            if L > 1e16:
                return x, False
        step = np.linalg.norm(x_new - project(x_new - grad(x_new) / L))
        if step <= tol:
            return x_new, True
        if f_new > fx:
            tk, y = 1.0, x.copy()  # restart on non-monotone step
            L = max(L / 2.0, 1e-12)
            continue
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        y = x_new + ((tk - 1.0) / t_next) * (x_new - x)
        x_prev, x, fx, tk = x, x_new, f_new, t_next
        L = max(L / 1.5, 1e-12)
    return x, False


# --------------------------------------------------------------------------
# base class


class GameFunction:
    """One round's payoff. x minimizes, y maximizes."""

    name = "game"
    exact_best_responses = False

    def __init__(self, domain: Product):
        if not isinstance(domain, Product) or len(domain.factors) != 2:
            raise ValueError("game domain must be a two-factor Product")
        self.domain = domain
        self.X, self.Y = domain.factors
        self.dx, self.dy = self.X.dim, self.Y.dim
        self._constants = None
        self._saddle = None

    # oracles ---------------------------------------------------------------
    def value(self, x, y):
        raise NotImplementedError

    def grad_x(self, x, y):
        raise NotImplementedError

    def grad_y(self, x, y):
        raise NotImplementedError

    def split(self, z):
        z = np.asarray(z, dtype=float)
        return z[..., : self.dx], z[..., self.dx:]

    def value_z(self, z):
        return self.value(*self.split(z))

    def operator(self, z):
        x, y = self.split(z)
        return np.concatenate([self.grad_x(x, y), -self.grad_y(x, y)], axis=-1)

    @property
    def tags(self) -> frozenset:
        return frozenset({CONVEX_CONCAVE})

    # best responses --------------------------------------------------------
    def best_response_x(self, y):
        y = np.asarray(y, dtype=float)
        x, _ = minimize_convex(lambda x: self.value(x, y), lambda x: self.grad_x(x, y),
                               self.X.project, self.X.center())
        return x

    def best_response_y(self, x):
        x = np.asarray(x, dtype=float)
        y, _ = minimize_convex(lambda y: -self.value(x, y), lambda y: -self.grad_y(x, y),
                               self.Y.project, self.Y.center())
        return y

    def min_x(self, y) -> float:
        return float(self.value(self.best_response_x(y), y))

    def max_y(self, x) -> float:
        return float(self.value(x, self.best_response_y(x)))

    def duality_gap(self, z) -> float:
        x, y = self.split(z)
        return self.max_y(x) - self.min_x(y)

    # saddle ----------------------------------------------------------------
    def saddle(self):
        """(x*, y*, value) of this function over its domain (cached)."""
        if self._saddle is None:
            self._saddle = self._compute_saddle()
        return self._saddle

    def _compute_saddle(self):
        z, _ = extragradient_saddle(self)
        x, y = self.split(z)
        return x, y, float(self.value(x, y))

    # constants -------------------------------------------------------------
    @property
    def constants(self) -> FunctionConstants:
        if self._constants is None:
            self._constants = self._compute_constants()
        return self._constants

    def _compute_constants(self) -> FunctionConstants:
        L0, L1 = sampled_lipschitz(self)
        return FunctionConstants(L0=L0, L1=L1, D=self.domain.diameter(),
                                 sources={"L0": "sampled", "L1": "sampled"})

    def describe(self) -> dict:
        return {"name": self.name}


def sampled_lipschitz(f: GameFunction, n: int = SAMPLE_SIZE, seed: int = 0):
    """Sampled max of ||F|| and of the operator difference quotient, times 1.1."""
    rng = np.random.Generator(np.random.Philox(seed))
    Z = f.domain.sample(rng, n)
    verts = f.domain.vertices()
    if verts is not None and len(verts) <= 4096:
        Z = np.vstack([Z, verts])
    FZ = f.operator(Z)
    L0 = SAFETY * float(np.max(np.linalg.norm(FZ, axis=-1)))
    W = f.domain.project(Z + 1e-3 * f.domain.diameter() * rng.standard_normal(Z.shape))
    dz = np.linalg.norm(W - Z, axis=-1)
    keep = dz > 1e-12
    dF = np.linalg.norm(f.operator(W[keep]) - FZ[keep], axis=-1)
    L1 = SAFETY * float(np.max(dF / dz[keep])) if keep.any() else 0.0
    return L0, L1


# --------------------------------------------------------------------------
# quadratic games


class QuadraticGame(GameFunction):
    """f = (px/2)|x|^2 - (py/2)|y|^2 + x'By + cx'x + cy'y + c0."""

    name = "quadratic"
    exact_best_responses = True

    def __init__(self, px, py, B, cx, cy, c0, domain: Product):
        super().__init__(domain)
        self.px, self.py = float(px), float(py)
        if self.px < 0 or self.py < 0:
            raise ValueError("quadratic game must be convex-concave (px, py >= 0)")
        self.B = np.asarray(B, dtype=float).reshape(self.dx, self.dy)
        self.cx = np.asarray(cx, dtype=float).reshape(self.dx)
        self.cy = np.asarray(cy, dtype=float).reshape(self.dy)
        self.c0 = float(c0)
        self.exact_best_responses = self.px > 0 and self.py > 0

    @classmethod
    def centered(cls, lam, a, b, B, domain, lam_y=None, offset=0.0):
        """(lam/2)|x-a|^2 - (lam_y/2)|y-b|^2 + (x-a)'B(y-b) + offset."""
        lam_y = lam if lam_y is None else lam_y
        a = np.atleast_1d(np.asarray(a, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        B = np.asarray(B, dtype=float).reshape(a.size, b.size)
        cx = -lam * a - B @ b
        cy = lam_y * b - B.T @ a
        c0 = 0.5 * lam * a @ a - 0.5 * lam_y * b @ b + a @ B @ b + offset
        return cls(lam, lam_y, B, cx, cy, c0, domain)

    def value(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        bil = np.einsum("...i,ij,...j->...", x, self.B, y)
        return (0.5 * self.px * np.sum(x * x, axis=-1) - 0.5 * self.py * np.sum(y * y, axis=-1)
                + bil + x @ self.cx + y @ self.cy + self.c0)

    def grad_x(self, x, y):
        return self.px * np.asarray(x, float) + np.asarray(y, float) @ self.B.T + self.cx

    def grad_y(self, x, y):
        return -self.py * np.asarray(y, float) + np.asarray(x, float) @ self.B + self.cy

    @property
    def tags(self):
        t = {CONVEX_CONCAVE}
        if self.px > 0 and self.py > 0:
            t |= {STRONGLY_CONVEX_CONCAVE, TWO_SIDED_PL, MIN_MAX_EC}
        if not np.any(self.B):
            t.add(SEPARABLE)
        return frozenset(t)

    def best_response_x(self, y):
        if self.px <= 0:
            return super().best_response_x(y)
        lin = np.asarray(y, float) @ self.B.T + self.cx
        return self.X.project(-lin / self.px)

    def best_response_y(self, x):
        if self.py <= 0:
            return super().best_response_y(x)
        lin = np.asarray(x, float) @ self.B + self.cy
        return self.Y.project(lin / self.py)

    def hessian(self) -> np.ndarray:
        H = np.zeros((self.dx + self.dy,) * 2)
        H[: self.dx, : self.dx] = self.px * np.eye(self.dx)
        H[self.dx:, self.dx:] = -self.py * np.eye(self.dy)
        H[: self.dx, self.dx:] = self.B
        H[self.dx:, : self.dx] = self.B.T
        return H

    def _compute_saddle(self):
        if self.px > 0 and self.py > 0:
            # interior stationary point solves H z = -(cx, cy)
            z = np.linalg.solve(self.hessian(), -np.concatenate([self.cx, self.cy]))
            if self.domain.contains(z):
                x, y = self.split(z)
                return x, y, float(self.value(x, y))
        return super()._compute_saddle()

    def _compute_constants(self):
        D = self.domain.diameter()
        L1 = float(np.max(np.abs(np.linalg.eigvalsh(self.hessian()))))
        verts = self.domain.vertices()
        sources = {"L1": "exact"}
        if verts is not None:
            # ||F||^2 is convex (F affine) so its max over a polytope sits at a vertex
            L0 = float(np.max(np.linalg.norm(self.operator(verts), axis=-1)))
            sources["L0"] = "vertex-exact"
        else:
            L0, _ = sampled_lipschitz(self)
            sources["L0"] = "sampled"
        lam = min(self.px, self.py)
        alpha = lam / L0 ** 2 if L0 > 0 else 0.0
        return FunctionConstants(L0=L0, L1=L1, lam=lam, alpha=alpha, mu1=self.px,
                                 mu2=self.py, D=D, sources=sources)

    def describe(self):
        return {"name": self.name, "px": self.px, "py": self.py, "B": self.B.tolist(),
                "cx": self.cx.tolist(), "cy": self.cy.tolist(), "c0": self.c0}


# --------------------------------------------------------------------------
# log-portfolio games


class LogPortfolio(GameFunction):
    """f(x, y) = -sum_k w_k ln( sum_i R[k, i] x_i / y_i ).

    A single row with weight one is the portfolio game; sums of portfolio
    games stack their rows, so the class is closed under averaging.
    """

    name = "log-portfolio"

    def __init__(self, rows, domain: Product, weights=None):
        super().__init__(domain)
        R = np.atleast_2d(np.asarray(rows, dtype=float))
        if R.shape[1] != self.dx or self.dx != self.dy:
            raise ValueError("rows must match the x and y dimensions")
        if np.any(R <= 0):
            raise ValueError("portfolio coefficients must be positive")
        if not isinstance(self.Y, Box) or np.any(self.Y.lower <= 0):
            raise ValueError("y must live in a box bounded away from zero")
        if isinstance(self.X, Box):
            if np.any(self.X.lower < 0):
                raise ValueError("x box must be nonnegative")
        elif not isinstance(self.X, Simplex):
            raise ValueError("x must live in a simplex or a nonnegative box")
        self.R = R
        self.w = np.ones(len(R)) if weights is None else np.asarray(weights, dtype=float)
        self.exact_best_responses = len(R) == 1

    def _ratios(self, x, y):
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise OracleError("log-portfolio oracles need y > 0")
        x = np.asarray(x, dtype=float)
        S = (x / y) @ self.R.T
        if np.any(S <= 0):
            raise OracleError("portfolio return is not positive")
        return x, y, S

    def value(self, x, y):
        _, _, S = self._ratios(x, y)
        return -np.log(S) @ self.w

    def grad_x(self, x, y):
        _, y, S = self._ratios(x, y)
        return -((self.w / S) @ self.R) / y

    def grad_y(self, x, y):
        x, y, S = self._ratios(x, y)
        return ((self.w / S) @ self.R) * x / (y * y)

    @property
    def tags(self):
        return frozenset({CONVEX_CONCAVE, MIN_MAX_EC})

    def best_response_y(self, x):
        # every term is nondecreasing in each y_i
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.Y.upper, x.shape[:-1] + (self.dy,)).copy()

    def best_response_x(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim > 1:
            return np.stack([self.best_response_x(row) for row in y])
        if len(self.R) == 1:
            c = self.R[0] / y
            if isinstance(self.X, Box):
                return self.X.upper.copy()
            x = np.zeros(self.dx)
            x[int(np.argmax(c))] = self.X.scale
            return x
        return minimize_fixed_y_portfolio(self.R / y, self.w, self.X)

    def _compute_saddle(self):
        y = self.Y.upper.copy()
        x = self.best_response_x(y)
        return x, y, float(self.value(x, y))

    def _compute_constants(self):
        lo, hi = self.Y.lower, self.Y.upper
        xverts = self.X.vertices()
        gx = 0.0
        for r, wk in zip(self.R, self.w):
            s_min = float(np.min(xverts @ (r / hi)))
            gx += wk * np.linalg.norm(r / lo) / s_min
        gy = float(np.sum(self.w)) / float(np.min(lo))
        L0 = float(np.hypot(gx, gy))
        _, L1 = sampled_lipschitz(self, n=512)
        return FunctionConstants(L0=L0, L1=L1, alpha=1.0, D=self.domain.diameter(),
                                 sources={"L0": "analytic-bound", "L1": "sampled",
                                          "alpha": "exact"})

    def describe(self):
        return {"name": self.name, "rows": self.R.tolist(), "weights": self.w.tolist()}


def minimize_fixed_y_portfolio(C, w, X: Domain):
    """argmin_x -sum_k w_k ln(C_k . x) over X."""
    C = np.atleast_2d(C)

    def value(x):
        return -np.log(C @ x) @ w

    def grad(x):
        return -(w / (C @ x)) @ C

    x, _ = minimize_convex(value, grad, X.project, X.center())
    return x


# --------------------------------------------------------------------------
# generic weighted sums


class FunctionSum(GameFunction):
    name = "sum"

    def __init__(self, functions: Sequence[GameFunction], weights=None):
        super().__init__(functions[0].domain)
        self.functions = list(functions)
        self.w = np.ones(len(functions)) if weights is None else np.asarray(weights, float)

    def value(self, x, y):
        return sum(w * f.value(x, y) for w, f in zip(self.w, self.functions))

    def grad_x(self, x, y):
        return sum(w * f.grad_x(x, y) for w, f in zip(self.w, self.functions))

    def grad_y(self, x, y):
        return sum(w * f.grad_y(x, y) for w, f in zip(self.w, self.functions))

    @property
    def tags(self):
        common = frozenset.intersection(*[f.tags for f in self.functions])
        return common & {CONVEX_CONCAVE, SEPARABLE, STRONGLY_CONVEX_CONCAVE}


def combine(functions: Sequence[GameFunction], weights=None) -> GameFunction:
    """Weighted sum of game functions, kept in closed form when possible."""
    functions = list(functions)
    if not functions:
        raise ValueError("nothing to combine")
    w = np.ones(len(functions)) if weights is None else np.asarray(weights, float)
    # merge repeated objects (piecewise-stationary sequences reuse them)
    uniq, acc = {}, {}
    for f, wi in zip(functions, w):
        uniq[id(f)] = f
        acc[id(f)] = acc.get(id(f), 0.0) + wi
    fs = list(uniq.values())
    ws = np.array([acc[id(f)] for f in fs])
    dom = fs[0].domain
    if len(fs) == 1 and ws[0] == 1.0:
        return fs[0]
    if all(type(f) is QuadraticGame and f.domain is dom for f in fs):
        return QuadraticGame(
            ws @ [f.px for f in fs], ws @ [f.py for f in fs],
            sum(wi * f.B for wi, f in zip(ws, fs)),
            sum(wi * f.cx for wi, f in zip(ws, fs)),
            sum(wi * f.cy for wi, f in zip(ws, fs)),
            ws @ [f.c0 for f in fs], dom)
    if all(type(f) is LogPortfolio and f.domain is dom for f in fs):
        rows = np.vstack([f.R for f in fs])
        wts = np.concatenate([wi * f.w for wi, f in zip(ws, fs)])
        return LogPortfolio(rows, dom, wts)
    return FunctionSum(fs, ws)


# --------------------------------------------------------------------------
# saddle solver


def extragradient_saddle(f: GameFunction, z0=None, tol=1e-8, max_iter=1_000_000,
                         step=None, check_every=50):
    """Projected extragradient; returns (z, gap).

    Tracks both the last iterate (fast for strongly monotone operators) and
    the uniform average (the monotone guarantee) and stops once either has
    duality gap below ``tol``.
    """
    dom = f.domain
    z = dom.center() if z0 is None else dom.project(np.asarray(z0, float))
    if step is None:
        L1 = f.constants.L1
        step = 1.0 / (2.0 * max(L1, 1e-12))
    avg = np.zeros_like(z)
    best_z, best_gap = z, np.inf
    for k in range(1, max_iter + 1):
        w = dom.project(z - step * f.operator(z))
        z = dom.project(z - step * f.operator(w))
        avg += (w - avg) / k
        if k % check_every == 0 or k == max_iter:
            for cand in (z, avg):
                gap = f.duality_gap(cand)
                if gap < best_gap:
                    best_z, best_gap = cand.copy(), gap
            if best_gap <= tol:
                return best_z, best_gap
    raise SaddleError("extragradient did not reach the target gap", best_gap)


# --------------------------------------------------------------------------
# sequences


class FunctionSequence:
    """f_1..f_T on a shared domain; ``at`` is 1-indexed and cached."""

    def __init__(self, T: int, domain: Product, builder: Callable[[int], GameFunction],
                 name: str = "", params: dict | None = None, adaptive: bool = False):
        if T < 1:
            raise ValueError("horizon must be positive")
        self.T = int(T)
        self.domain = domain
        self._builder = builder
        self._cache: dict[int, GameFunction] = {}
        self.name = name
        self.params = params or {}
        self.adaptive = adaptive

    def at(self, t: int) -> GameFunction:
        if not 1 <= t <= self.T:
            raise IndexError(f"round {t} outside 1..{self.T}")
        f = self._cache.get(t)
        if f is None:
            f = self._builder(t)
            if f.domain is not self.domain:
                raise ValueError("all rounds must share the sequence domain")
            self._cache[t] = f
        return f

    def __len__(self):
        return self.T

    def __iter__(self):
        return (self.at(t) for t in range(1, self.T + 1))

    def functions(self, upto: int | None = None) -> list:
        return [self.at(t) for t in range(1, (upto or self.T) + 1)]

    def total(self, upto: int | None = None) -> GameFunction:
        return combine(self.functions(upto))

    def prefix(self, T: int) -> "FunctionSequence":
        return FunctionSequence(T, self.domain, self.at, self.name, dict(self.params, T=T),
                                self.adaptive)


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def make_sc_sc_quadratic(lam, a, b, B, domain: Product) -> QuadraticGame:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.size != domain.factors[0].dim or b.size != domain.factors[1].dim:
        raise ValueError("centers do not match the domain factors")
    B = np.asarray(B, dtype=float).reshape(a.size, b.size)
    if not np.all(np.isfinite(B)):
        raise ValueError("coupling matrix must be finite")
    return QuadraticGame.centered(lam, a, b, B, domain)


def make_log_portfolio(A_diag, domain: Product) -> LogPortfolio:
    return LogPortfolio(np.asarray(A_diag, dtype=float)[None, :], domain)


def random_coupling(rng, dx, dy, norm) -> np.ndarray:
    B = rng.standard_normal((dx, dy))
    s = np.linalg.norm(B, 2)
    return B * (norm / s) if s > 0 else B


def box_game_domain(dx, dy, half_width) -> Product:
    return Product((Box(-half_width * np.ones(dx), half_width * np.ones(dx)),
                    Box(-half_width * np.ones(dy), half_width * np.ones(dy))))


def sc_sc_sequence(T, seed=0, lam=1.0, dx=2, dy=2, half_width=1.0, shift=0.5,
                   coupling=0.5, domain=None) -> FunctionSequence:
    """i.i.d. centers a_t, b_t ~ U[-shift, shift] with one fixed coupling.

    Draws are made round by round, so shorter horizons are prefixes of
    longer ones for the same seed.
    """
    domain = domain or box_game_domain(dx, dy, half_width)
    rng = _rng(seed)
    B = random_coupling(rng, dx, dy, coupling)
    centers = rng.uniform(-shift, shift, size=(T, dx + dy))
    params = dict(T=T, seed=seed, lam=lam, dx=dx, dy=dy, half_width=half_width,
                  shift=shift, coupling=coupling)
    return FunctionSequence(
        T, domain,
        lambda t: make_sc_sc_quadratic(lam, centers[t - 1, :dx], centers[t - 1, dx:], B, domain),
        "sc-sc-quadratic", params)


def piecewise_sc_sc_sequence(T, segments=4, seed=0, lam=1.0, dx=2, dy=2, half_width=1.5,
                             shift=0.5, coupling=0.25, domain=None) -> FunctionSequence:
    """Piecewise-stationary sc-sc quadratics; one shared object per segment."""
    domain = domain or box_game_domain(dx, dy, half_width)
    rng = _rng(seed)
    pieces = []
    for _ in range(segments):
        B = random_coupling(rng, dx, dy, coupling)
        c = rng.uniform(-shift, shift, size=dx + dy)
        pieces.append(make_sc_sc_quadratic(lam, c[:dx], c[dx:], B, domain))
    bounds = segment_starts(T, segments)
    params = dict(T=T, segments=segments, seed=seed, lam=lam, dx=dx, dy=dy,
                  half_width=half_width, shift=shift, coupling=coupling)

    def build(t):
        k = int(np.searchsorted(bounds, t, side="right")) - 1
        return pieces[k]

    return FunctionSequence(T, domain, build, "sc-sc-piecewise", params)


def segment_starts(T, segments) -> np.ndarray:
    """First round of each of ``segments`` near-equal blocks of 1..T."""
    return np.array([1 + (k * T) // segments for k in range(segments)])


def log_portfolio_sequence(T, seed=0, n=2, y_lower=0.5, y_upper=1.5, a_lower=0.5,
                           a_upper=1.5) -> FunctionSequence:
    domain = Product((Simplex(n), Box(y_lower * np.ones(n), y_upper * np.ones(n))))
    rng = _rng(seed)
    rows = rng.uniform(a_lower, a_upper, size=(T, n))
    params = dict(T=T, seed=seed, n=n, y_lower=y_lower, y_upper=y_upper,
                  a_lower=a_lower, a_upper=a_upper)
    return FunctionSequence(T, domain, lambda t: make_log_portfolio(rows[t - 1], domain),
                            "log-portfolio", params)


IMPOSSIBILITY_FIRST = (np.array([[1.0, -1.0], [-1.0, 1.0]]), np.zeros((2, 2)))
IMPOSSIBILITY_SECOND = (np.array([[-1.0, 1.0], [1.0, -1.0]]), np.array([[-1.0, 1.0], [-1.0, 1.0]]))


def make_impossibility_pair(T: int):
    """Two sequences on simplex x simplex that agree on the first half.

    f_t(x, y) = |x|^2 - |y|^2/4 + x' A_t y, with the coupling switching at T/2.
    """
    if T % 2 or T < 4:
        raise ValueError("impossibility horizon must be even and at least 4")
    domain = Product((Simplex(2), Simplex(2)))
    seqs = []
    for early, late in (IMPOSSIBILITY_FIRST, IMPOSSIBILITY_SECOND):
        f_early = QuadraticGame(2.0, 0.5, early, np.zeros(2), np.zeros(2), 0.0, domain)
        f_late = QuadraticGame(2.0, 0.5, late, np.zeros(2), np.zeros(2), 0.0, domain)
        seqs.append(FunctionSequence(
            T, domain, lambda t, a=f_early, b=f_late: a if t <= T // 2 else b,
            "impossibility", {"T": T}))
    return seqs[0], seqs[1]


def dyne_targets(t: int, x_t: float, y_t: float):
    """Shifted per-round saddle (x*_t, y*_t) chosen against the played point."""
    sx = 2.0 * (x_t < 0) - 1.0
    sy = 2.0 * (y_t < 0) - 1.0
    sign = (-1) ** t
    return x_t + 0.5 * (sign + 1) * sx, y_t - 0.5 * (sign - 1) * sy


def make_dyne_sequence(T: int, action_feed: Callable[[int], tuple], half_width=2.0):
    """f_t = (x - x*_t)^2 - (y - y*_t)^2 with targets set by the round-t play."""
    domain = box_game_domain(1, 1, half_width)

    def build(t):
        x_t, y_t = action_feed(t)
        xs, ys = dyne_targets(t, float(np.ravel(x_t)[0]), float(np.ravel(y_t)[0]))
        return QuadraticGame.centered(2.0, [xs], [ys], np.zeros((1, 1)), domain)

    return FunctionSequence(T, domain, build, "dyne", {"T": T}, adaptive=True)


# --------------------------------------------------------------------------
# class membership checks


def _pairs(f: GameFunction, n: int, rng):
    za = f.domain.sample(rng, n)
    zb = f.domain.sample(rng, n)
    return za, zb


def check_class_membership(f: GameFunction, n_samples: int = 500, rng_seed: int = 0,
                           slack: float = 1e-7) -> dict:
    """Sample pairs and count violations of each inequality the class promises.

    Keys of the returned dict are check names; values are violation counts.
    ``pl_mu_max`` reports the largest PL parameter the samples support.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = _rng(rng_seed)
    za, zb = _pairs(f, n_samples, rng)
    xa, ya = f.split(za)
    xb, yb = f.split(zb)
    d = za - zb
    Fa, Fb = f.operator(za), f.operator(zb)
    cross = f.value(xa, yb) - f.value(xb, ya)
    lhs_a = np.sum(Fa * d, axis=-1)
    lhs_b = np.sum(Fb * d, axis=-1)
    report = {"samples": n_samples}
    tags = f.tags
    c = f.constants

    report["sandwich"] = int(np.sum(lhs_a + slack < cross) + np.sum(cross < lhs_b - slack))

    if STRONGLY_CONVEX_CONCAVE in tags:
        strong = lhs_b + 0.5 * c.lam * np.sum(d * d, axis=-1)
        report["strong"] = int(np.sum(cross < strong - slack))

    if MIN_MAX_EC in tags:
        gamma = c.gamma
        gx = f.grad_x(xb, yb)
        gy = f.grad_y(xb, yb)
        # block quadratic form d' M(z_b) d with M = diag(gx gx', gy gy')
        quad = np.sum(gx * d[..., : f.dx], axis=-1) ** 2 + np.sum(gy * d[..., f.dx:], axis=-1) ** 2
        report["ec_lower"] = int(np.sum(cross < lhs_b + 0.5 * gamma * quad - slack))
        mono = np.sum((Fa - Fb) * d, axis=-1)
        report["ec_monotone"] = int(np.sum(mono < 0.5 * gamma * quad - slack))

    if TWO_SIDED_PL in tags:
        mu1, mu2 = c.mu1, c.mu2
        gx = f.grad_x(xa, ya)
        gy = f.grad_y(xa, ya)
        fa = f.value(xa, ya)
        min_x = f.value(f.best_response_x(ya), ya)
        max_y = f.value(xa, f.best_response_y(xa))
        gx2 = np.sum(gx * gx, axis=-1)
        gy2 = np.sum(gy * gy, axis=-1)
        ex = fa - min_x
        ey = max_y - fa
        report["pl_x"] = int(np.sum(gx2 < 2 * mu1 * ex - slack))
        report["pl_y"] = int(np.sum(gy2 < 2 * mu2 * ey - slack))
        with np.errstate(divide="ignore", invalid="ignore"):
            rx = np.where(ex > 1e-12, gx2 / (2 * ex), np.inf)
            ry = np.where(ey > 1e-12, gy2 / (2 * ey), np.inf)
        report["pl_mu_max"] = float(min(np.min(rx), np.min(ry)))
    return report


def violations(report: dict) -> int:
    return sum(v for k, v in report.items() if k not in ("samples", "pl_mu_max"))


INSTANCES = {
    "sc-sc-quadratic": sc_sc_sequence,
    "sc-sc-piecewise": piecewise_sc_sc_sequence,
    "log-portfolio": log_portfolio_sequence,
}


def build_instance(name: str, T: int, seed: int = 0, **params):
    """Registry lookup. 'impossibility' takes which=1|2; 'dyne' takes action_feed."""
    if name == "impossibility":
        which = int(params.pop("which", 1))
        return make_impossibility_pair(T)[which - 1]
    if name == "dyne":
        return make_dyne_sequence(T, **params)
    try:
        builder = INSTANCES[name]
    except KeyError:
        raise KeyError(f"unknown instance {name!r}") from None
    return builder(T, seed=seed, **params)


INSTANCE_NAMES = tuple(INSTANCES) + ("impossibility", "dyne")
