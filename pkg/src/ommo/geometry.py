"""Constraint sets and weighted-norm projections.

Every domain works on numpy arrays whose last axis holds the coordinates, so
``project`` and ``contains`` accept a single point or a batch of points.
The game domain is a :class:`Product` of the two players' sets; factor 0
belongs to the minimizing player and factor 1 to the maximizing player.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PSD_TOL = 1e-10
INNER_TOL = 1e-10
INNER_MAX_ITER = 10_000


class ProjectionError(RuntimeError):
    """Raised when the iterative projection does not converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class NotPSDError(ValueError):
    pass


def _as_point(z) -> np.ndarray:
    return np.asarray(z, dtype=float)


def _check_dim(domain: "Domain", z: np.ndarray) -> None:
    if z.shape[-1] != domain.dim:
        raise ValueError(f"point has dimension {z.shape[-1]}, domain has {domain.dim}")


class Domain:
    """Base class; subclasses implement the Euclidean projection."""

    dim: int

    def contains(self, z, tol: float = 0.0) -> bool:
        raise NotImplementedError

    def project(self, z) -> np.ndarray:
        raise NotImplementedError

    def diameter(self) -> float:
        raise NotImplementedError

    def center(self) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def vertices(self) -> np.ndarray | None:
        """Extreme points when the set is a polytope, else None."""
        return None

    def grid(self, per_axis: int) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Box(Domain):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("Box bounds must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError("Box requires lower < upper in every coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, z, tol=0.0):
        z = _as_point(z)
        _check_dim(self, z)
        return bool(np.all(z >= self.lower - tol) and np.all(z <= self.upper + tol))

    def project(self, z):
        return np.clip(_as_point(z), self.lower, self.upper)

    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    def center(self):
        return 0.5 * (self.lower + self.upper)

    def sample(self, rng, n):
        return rng.uniform(self.lower, self.upper, size=(n, self.dim))

    def vertices(self):
        corners = itertools.product(*zip(self.lower, self.upper))
        return np.array(list(corners), dtype=float)

    def grid(self, per_axis):
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def to_dict(self):
        return {"type": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True, eq=False)
class Simplex(Domain):
    """``{z >= 0, sum(z) = scale}`` in ``dim`` coordinates."""

    n: int
    scale: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("Simplex needs at least two coordinates")
        if not self.scale > 0:
            raise ValueError("Simplex scale must be positive")

    @property
    def dim(self) -> int:
        return self.n

    def contains(self, z, tol=0.0):
        z = _as_point(z)
        _check_dim(self, z)
        return bool(np.all(z >= -tol) and np.all(np.abs(z.sum(axis=-1) - self.scale) <= tol))

    def project(self, z):
        # sort-based threshold (Held et al. / Duchi et al.), vectorized over leading axes
        z = _as_point(z)
        s = np.sort(z, axis=-1)[..., ::-1]
        css = np.cumsum(s, axis=-1) - self.scale
        k = np.arange(1, self.n + 1)
        cond = s - css / k > 0
        rho = self.n - 1 - np.argmax(cond[..., ::-1], axis=-1)
        theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1)
        return np.maximum(z - theta, 0.0)

    def diameter(self):
        return float(self.scale * np.sqrt(2.0))

    def center(self):
        return np.full(self.n, self.scale / self.n)

    def sample(self, rng, n):
        return self.scale * rng.dirichlet(np.ones(self.n), size=n)

    def vertices(self):
        return self.scale * np.eye(self.n)

    def grid(self, per_axis):
        # lattice points with per_axis - 1 subdivisions of the scale
        m = per_axis - 1
        pts = [c for c in itertools.product(range(m + 1), repeat=self.n - 1) if sum(c) <= m]
        arr = np.array([list(c) + [m - sum(c)] for c in pts], dtype=float)
        return self.scale * arr / m

    def to_dict(self):
        return {"type": "simplex", "n": self.n, "scale": self.scale}


@dataclass(frozen=True, eq=False)
class Ball(Domain):
    centre: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.centre, dtype=float))
        object.__setattr__(self, "centre", c)
        if not self.radius > 0:
            raise ValueError("Ball radius must be positive")

    @property
    def dim(self) -> int:
        return self.centre.size

    def contains(self, z, tol=0.0):
        z = _as_point(z)
        _check_dim(self, z)
        return bool(np.all(np.linalg.norm(z - self.centre, axis=-1) <= self.radius + tol))

    def project(self, z):
        z = _as_point(z)
        d = z - self.centre
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        shrink = np.where(r > self.radius, self.radius / np.maximum(r, 1e-300), 1.0)
        return self.centre + d * shrink

    def diameter(self):
        return 2.0 * self.radius

    def center(self):
        return self.centre.copy()

    def sample(self, rng, n):
        g = rng.standard_normal((n, self.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.uniform(size=(n, 1)) ** (1.0 / self.dim)
        return self.centre + r * g

    def grid(self, per_axis):
        lo, hi = self.centre - self.radius, self.centre + self.radius
        pts = Box(lo, hi).grid(per_axis)
        return pts[np.linalg.norm(pts - self.centre, axis=1) <= self.radius + 1e-12]

    def to_dict(self):
        return {"type": "ball", "center": self.centre.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Product(Domain):
    factors: tuple = field(default_factory=tuple)

    def __post_init__(self):
        facs = tuple(self.factors)
        if not facs:
            raise ValueError("Product needs at least one factor")
        object.__setattr__(self, "factors", facs)

    @property
    def dim(self) -> int:
        return sum(f.dim for f in self.factors)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    def slices(self) -> list[slice]:
        out, start = [], 0
        for f in self.factors:
            out.append(slice(start, start + f.dim))
            start += f.dim
        return out

    def split(self, z) -> list[np.ndarray]:
        z = _as_point(z)
        return [z[..., s] for s in self.slices()]

    def contains(self, z, tol=0.0):
        z = _as_point(z)
        _check_dim(self, z)
        return all(f.contains(p, tol) for f, p in zip(self.factors, self.split(z)))

    def project(self, z):
        z = _as_point(z)
        return np.concatenate([f.project(p) for f, p in zip(self.factors, self.split(z))], axis=-1)

    def diameter(self):
        # exact for products: the squared diameters add
        return float(np.sqrt(sum(f.diameter() ** 2 for f in self.factors)))

    def center(self):
        return np.concatenate([f.center() for f in self.factors])

    def sample(self, rng, n):
        return np.concatenate([f.sample(rng, n) for f in self.factors], axis=1)

    def vertices(self):
        parts = [f.vertices() for f in self.factors]
        if any(p is None for p in parts):
            return None
        combos = itertools.product(*[range(len(p)) for p in parts])
        return np.array([np.concatenate([p[i] for p, i in zip(parts, c)]) for c in combos])

    def grid(self, per_axis):
        parts = [f.grid(per_axis) for f in self.factors]
        combos = itertools.product(*[range(len(p)) for p in parts])
        return np.array([np.concatenate([p[i] for p, i in zip(parts, c)]) for c in combos])

    def to_dict(self):
        return {"type": "product", "factors": [f.to_dict() for f in self.factors]}


def game_domain(x_set: Domain, y_set: Domain) -> Product:
    return Product((x_set, y_set))


def domain_from_dict(spec: dict) -> Domain:
    kind = spec["type"]
    if kind == "box":
        return Box(np.asarray(spec["lower"], float), np.asarray(spec["upper"], float))
    if kind == "simplex":
        return Simplex(int(spec["n"]), float(spec.get("scale", 1.0)))
    if kind == "ball":
        return Ball(np.asarray(spec["center"], float), float(spec["radius"]))
    if kind == "product":
        return Product(tuple(domain_from_dict(f) for f in spec["factors"]))
    raise ValueError(f"unknown domain type {kind!r}")


def contains(domain: Domain, z, tol: float = 0.0) -> bool:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return domain.contains(z, tol)


# --------------------------------------------------------------------------
# weighted projection


def _weight_matrix(A, dim: int) -> np.ndarray:
    if np.isscalar(A):
        return float(A) * np.eye(dim)
    mat = getattr(A, "A", A)
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (dim, dim):
        raise ValueError(f"weight matrix has shape {mat.shape}, expected {(dim, dim)}")
    return mat


def _is_diagonal(A: np.ndarray) -> bool:
    return not np.any(A - np.diag(np.diag(A)))


def _is_block_diagonal(A: np.ndarray, sizes: Sequence[int]) -> bool:
    mask = np.ones_like(A, dtype=bool)
    start = 0
    for s in sizes:
        mask[start:start + s, start:start + s] = False
        start += s
    return not np.any(A[mask])


def _weighted_simplex(u: np.ndarray, w: np.ndarray, scale: float) -> np.ndarray:
    """argmin sum_i w_i (z_i - u_i)^2 over the simplex, w > 0.

    KKT gives z_i = max(0, u_i - nu / w_i); sweep the sorted breakpoints
    nu_i = w_i u_i until the active set is consistent.
    """
    bp = w * u
    order = np.argsort(-bp)
    inv_w = 1.0 / w
    sum_u = sum_iw = 0.0
    nu = None
    for k, i in enumerate(order):
        sum_u += u[i]
        sum_iw += inv_w[i]
        cand = (sum_u - scale) / sum_iw
        nxt = bp[order[k + 1]] if k + 1 < len(order) else -np.inf
        if cand <= bp[i] and cand >= nxt:
            nu = cand
            break
    if nu is None:  # pragma: no cover - the sweep always terminates at k = n-1
        nu = cand
    return np.maximum(u - nu * inv_w, 0.0)


def _project_general(u, A, domain, tol=INNER_TOL, max_iter=INNER_MAX_ITER):
    """Accelerated projected gradient (FISTA with adaptive restart) on 1/2 (z-u)'A(z-u)."""
    L = float(np.linalg.eigvalsh(A)[-1])
    z = domain.project(u)
    if L <= 0:
        return z
    y, z_prev, tk = z.copy(), z.copy(), 1.0
    res = np.inf
    for _ in range(max_iter):
        z_new = domain.project(y - A @ (y - u) / L)
        # gradient-mapping residual, measured in z units
        res = float(np.linalg.norm(z_new - domain.project(z_new - A @ (z_new - u) / L)))
        if res <= tol:
            return z_new
        if np.dot(y - z_new, z_new - z_prev) > 0:
            tk = 1.0  # restart momentum
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        y = z_new + ((tk - 1.0) / t_next) * (z_new - z_prev)
        z_prev, tk = z_new, t_next
    raise ProjectionError("weighted projection did not converge", res)


def project_weighted(u, A, domain: Domain) -> np.ndarray:
    """Return argmin_{z in domain} (u - z)' A (u - z).

    ``A`` may be a scalar (meaning ``A * I``), an array, or any object with an
    ``A`` attribute (a :class:`~ommo.linalg.RegularityMatrix`).
    """
    u = _as_point(u)
    _check_dim(domain, u)
    if np.isscalar(A):
        if A < -PSD_TOL:
            raise NotPSDError("negative scalar weight")
        return domain.project(u)
    mat = _weight_matrix(A, domain.dim)
    if np.max(np.abs(mat - mat.T)) > 1e-12 * max(1.0, np.max(np.abs(mat))):
        raise NotPSDError("weight matrix is not symmetric")
    mat = 0.5 * (mat + mat.T)
    if _is_diagonal(mat):
        diag = np.diag(mat)
        if np.min(diag) < -PSD_TOL:
            raise NotPSDError(f"weight matrix has eigenvalue {np.min(diag):.3e}")
        return _project_diagonal(u, diag, domain)
    if np.linalg.eigvalsh(mat)[0] < -PSD_TOL:
        raise NotPSDError("weight matrix has a negative eigenvalue")
    if isinstance(domain, Product) and _is_block_diagonal(mat, domain.sizes):
        parts = []
        for f, s in zip(domain.factors, domain.slices()):
            parts.append(project_weighted(u[s], mat[s, s], f))
        return np.concatenate(parts)
    return _project_general(u, mat, domain)


def _project_diagonal(u, diag, domain):
    if np.allclose(diag, diag[0], rtol=0, atol=0) or isinstance(domain, Box):
        return domain.project(u)
    if isinstance(domain, Simplex) and np.all(diag > 0):
        return _weighted_simplex(u, diag, domain.scale)
    if isinstance(domain, Product):
        return np.concatenate([
            _project_diagonal(u[s], diag[s], f) for f, s in zip(domain.factors, domain.slices())
        ])
    return _project_general(u, np.diag(diag), domain)
