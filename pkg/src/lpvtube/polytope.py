"""Compact convex polytopes with paired vertex / half-space representations.

Only what the controller needs is implemented: conversion between the two
representations in dimensions 1 to 3, gauge functions, homothety
(``z + alpha * S``), containment, intersection, Fourier-Motzkin projection
and LP-based redundancy elimination.  All predicates use the absolute
tolerance ``EPS_GEOM``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import (DegenerateInput, DimensionMismatch, EmptySet, NegativeScaling,
                     NotPCSet, Unbounded, Unsupported)
from .lp import LpProblem, LpStatus, lp_solve

EPS_GEOM = 1e-9
MAX_DIM = 3


@dataclass(frozen=True, eq=False)
class Polytope:
    """Polytope ``{x : A x <= b} = convh(vertices)``.

    Rows of ``A`` are scaled to unit infinity norm.  Instances are treated
    as immutable; use :meth:`from_vertices` / :meth:`from_halfspaces` to
    build validated ones.
    """

    vertices: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        for name in ("vertices", "A", "b"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_vertices(cls, points) -> "Polytope":
        return hrep_from_vrep(points)

    @classmethod
    def from_halfspaces(cls, A, b) -> "Polytope":
        return vrep_from_hrep(A, b)

    @classmethod
    def box(cls, lo, hi) -> "Polytope":
        lo, hi = np.atleast_1d(np.asarray(lo, float)), np.atleast_1d(np.asarray(hi, float))
        n = lo.size
        A = np.vstack([np.eye(n), -np.eye(n)])
        b = np.concatenate([hi, -lo])
        return vrep_from_hrep(A, b)

    @classmethod
    def inf_ball(cls, n: int, radius: float = 1.0) -> "Polytope":
        return cls.box(-radius * np.ones(n), radius * np.ones(n))

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_facets(self) -> int:
        return self.b.size

    def is_pc_set(self, eps: float = EPS_GEOM) -> bool:
        return self.n_facets > 0 and bool(np.all(self.b > eps))

    def contains(self, x, eps: float = EPS_GEOM) -> bool:
        x = np.asarray(x, float)
        return bool(np.all(self.A @ x <= self.b + eps))

    def __mul__(self, gamma):
        return scale(self, gamma)

    __rmul__ = __mul__

    def __add__(self, v):
        return translate(self, v)

    def __repr__(self):
        return f"Polytope(dim={self.dim}, vertices={self.n_vertices}, facets={self.n_facets})"

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "vertices": self.vertices.tolist(),
            "halfspaces": [{"a": a.tolist(), "b": float(bi)} for a, bi in zip(self.A, self.b)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Polytope":
        if d.get("vertices"):
            P = hrep_from_vrep(d["vertices"])
        elif d.get("halfspaces"):
            A = [h["a"] for h in d["halfspaces"]]
            b = [h["b"] for h in d["halfspaces"]]
            P = vrep_from_hrep(A, b)
        elif "lower" in d and "upper" in d:
            P = cls.box(d["lower"], d["upper"])
        else:
            raise ValueError("polytope needs 'vertices', 'halfspaces' or 'lower'/'upper'")
        if "dim" in d and int(d["dim"]) != P.dim:
            raise DimensionMismatch(f"declared dim {d['dim']} but data has dim {P.dim}")
        return P


def require_pc(P: Polytope, what: str = "set") -> Polytope:
    if not P.is_pc_set():
        raise NotPCSet(f"{what} does not contain the origin in its interior")
    return P


def _normalize(A, b):
    A = np.atleast_2d(np.asarray(A, float))
    b = np.asarray(b, float).ravel()
    if A.shape[0] != b.size:
        raise DimensionMismatch(f"{A.shape[0]} normals but {b.size} offsets")
    s = np.abs(A).max(axis=1)
    keep = s > 0
    # 0 @ x <= b: trivially true for b >= 0, infeasible otherwise
    if np.any(b[~keep] < -EPS_GEOM):
        raise EmptySet("constraint 0 <= b with b < 0")
    return A[keep] / s[keep, None], b[keep] / s[keep]


# ---------------------------------------------------------------------------
# convex hulls in dimension 1..3

def _hull_1d(P):
    lo, hi = P[:, 0].min(), P[:, 0].max()
    if hi - lo <= EPS_GEOM:
        raise DegenerateInput("1-D hull is a single point")
    return np.array([[hi], [lo]]), np.array([[1.0], [-1.0]]), np.array([hi, -lo])


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _hull_2d(P):
    pts = sorted(map(tuple, np.unique(P, axis=0)))
    if len(pts) < 3:
        raise DegenerateInput("fewer than 3 distinct points in the plane")
    scale = max(1.0, float(np.abs(P).max()))

    def chain(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0.0:
                out.pop()
            out.append(p)
        return out

    lower, upper = chain(pts), chain(reversed(pts))
    V = [np.array(p) for p in lower[:-1] + upper[:-1]]
    # drop vertices within tolerance of the line through their neighbours;
    # their edge normals would be noise
    changed = True
    while changed and len(V) >= 3:
        changed = False
        for i in range(len(V)):
            a, p, c = V[i - 1], V[i], V[(i + 1) % len(V)]
            d = c - a
            L = np.hypot(*d)
            dist = np.hypot(*(p - a)) if L == 0 else abs(_cross(a, c, p)) / L
            if dist <= EPS_GEOM * scale:
                V.pop(i)
                changed = True
                break
    if len(V) < 3:
        raise DegenerateInput("points are collinear")
    V = np.array(V)
    # counter-clockwise order; outward normal of edge p->q is (dy, -dx)
    E = np.roll(V, -1, axis=0) - V
    A = np.column_stack([E[:, 1], -E[:, 0]])
    b = np.einsum("ij,ij->i", A, V)
    A, b = _normalize(A, b)
    return V, A, b


def _hull_3d(P):
    try:
        hull = ConvexHull(P)
    except QhullError as exc:
        raise DegenerateInput(f"qhull failed: {exc}".splitlines()[0]) from None
    V = P[hull.vertices]
    A, b = _normalize(hull.equations[:, :3], -hull.equations[:, 3])
    return V, *_merge_facets(A, b)


def _merge_facets(A, b, tol=1e-9):
    keep_A, keep_b = [], []
    for a, bi in zip(A, b):
        if any(np.abs(a - ka).max() <= tol and abs(bi - kb) <= tol * max(1, abs(kb))
               for ka, kb in zip(keep_A, keep_b)):
            continue
        keep_A.append(a)
        keep_b.append(bi)
    return np.array(keep_A), np.array(keep_b)


def convex_hull(points):
    """Return ``(extreme points, A, b)`` of a full-dimensional point cloud."""
    P = np.atleast_2d(np.asarray(points, float))
    n = P.shape[1]
    if n > MAX_DIM:
        raise Unsupported(f"hull computation is implemented for n <= {MAX_DIM}, got {n}")
    if P.shape[0] < n + 1:
        raise DegenerateInput(f"need at least {n + 1} points in R^{n}")
    return {1: _hull_1d, 2: _hull_2d, 3: _hull_3d}[n](P)


def hrep_from_vrep(points) -> Polytope:
    V, A, b = convex_hull(points)
    return Polytope(V, A, b)


def _coordinate_bounds(A, b):
    """LP max/min of each coordinate; raises Unbounded / EmptySet."""
    n = A.shape[1]
    for i in range(n):
        for sgn in (1.0, -1.0):
            c = np.zeros(n)
            c[i] = -sgn
            res = lp_solve(LpProblem(c, A, b))
            if res.status is LpStatus.INFEASIBLE:
                raise EmptySet("half-space system is infeasible")
            if res.status is LpStatus.UNBOUNDED:
                raise Unbounded(f"coordinate {i} is unbounded")


def chebyshev_center(A, b):
    """Center and radius (2-norm) of the largest inscribed ball."""
    A, b = _normalize(A, b)
    n = A.shape[1]
    norms = np.linalg.norm(A, axis=1)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    G = np.vstack([np.column_stack([A, norms]), np.r_[np.zeros(n), -1.0]])
    g = np.r_[b, 0.0]
    res = lp_solve(LpProblem(c, G, g))
    if res.status is LpStatus.INFEASIBLE:
        raise EmptySet("half-space system is infeasible")
    if res.status is LpStatus.UNBOUNDED:
        raise Unbounded("unbounded inscribed ball")
    return res.y[:n], float(res.y[n])


def vrep_from_hrep(A, b) -> Polytope:
    A, b = _normalize(A, b)
    n = A.shape[1]
    if n > MAX_DIM:
        raise Unsupported(f"vertex enumeration is implemented for n <= {MAX_DIM}, got {n}")
    _coordinate_bounds(A, b)
    center, radius = chebyshev_center(A, b)
    if radius <= EPS_GEOM:
        raise DegenerateInput("polytope has empty interior")
    # polar duality about the Chebyshev center
    d = b - A @ center
    Y = A / d[:, None]
    _, DA, Db = convex_hull(Y)
    # each dual facet is a primal vertex; re-solve it from its active
    # constraints (the dual normal alone is only accurate to ~1e-8) and keep
    # the basis with the smallest violation of the full system
    V = []
    for a_d, b_d in zip(DA, Db):
        on = np.nonzero(np.abs(Y @ a_d - b_d) <= 1e-7 * max(1.0, abs(b_d)))[0]
        best, best_viol = center + a_d / b_d, np.inf
        for basis in itertools.islice(itertools.combinations(on, n), 64):
            Ab = A[list(basis)]
            if abs(np.linalg.det(Ab)) < 1e-12:
                continue
            x = np.linalg.solve(Ab, b[list(basis)])
            viol = float(np.max(A @ x - b))
            if viol < best_viol:
                best, best_viol = x, viol
        V.append(best)
    return hrep_from_vrep(np.array(V))


# ---------------------------------------------------------------------------
# gauges and distances

def gauge(S: Polytope, x) -> float | np.ndarray:
    """Gauge (Minkowski functional) of the PC-set ``S`` at ``x``.

    ``x`` may be a single point or an array of points (one per row).
    """
    x = np.asarray(x, float)
    vals = (x @ S.A.T) / S.b
    return np.maximum(vals.max(axis=-1), 0.0)


def _points(X):
    if isinstance(X, Polytope):
        return X.vertices
    P = np.atleast_2d(np.asarray(X, float))
    if P.size == 0:
        raise EmptySet("empty point set")
    return P


def set_gauge(S: Polytope, X) -> float:
    """Smallest ``gamma`` with ``X`` inside ``gamma * S``; vertex maximum."""
    return float(np.max(gauge(S, _points(X))))


def hausdorff_origin(X) -> float:
    return float(np.abs(_points(X)).max())


# ---------------------------------------------------------------------------
# affine maps

def minkowski_homothety(z, alpha: float, S: Polytope) -> Polytope:
    if alpha < 0:
        raise NegativeScaling(f"scaling {alpha} < 0")
    z = np.asarray(z, float).ravel()
    if z.size != S.dim:
        raise DimensionMismatch(f"translation of size {z.size} for a {S.dim}-D set")
    V = z + alpha * S.vertices
    if alpha == 0:
        V = z[None, :]
    return Polytope(V, S.A, alpha * S.b + S.A @ z)


def scale(X: Polytope, gamma: float) -> Polytope:
    return minkowski_homothety(np.zeros(X.dim), gamma, X)


def translate(X: Polytope, v) -> Polytope:
    return minkowski_homothety(v, 1.0, X)


def linear_image(X: Polytope, T) -> Polytope:
    return hrep_from_vrep(_points(X) @ np.asarray(T, float).T)


def contains_set(A: Polytope, B, eps: float = EPS_GEOM) -> bool:
    P = _points(B)
    return bool(np.all(P @ A.A.T <= A.b + eps))


def intersect(P: Polytope, Q: Polytope) -> Polytope:
    if P.dim != Q.dim:
        raise DimensionMismatch(f"cannot intersect {P.dim}-D and {Q.dim}-D sets")
    return vrep_from_hrep(np.vstack([P.A, Q.A]), np.concatenate([P.b, Q.b]))


# ---------------------------------------------------------------------------
# redundancy elimination

def remove_redundant_halfspaces(A, b, eps: float = EPS_GEOM):
    """Drop duplicated and implied rows; the polytope must be nonempty."""
    A, b = _normalize(A, b)
    keep = list(range(b.size))
    i = 0
    while i < len(keep):
        row = keep[i]
        others = [r for r in keep if r != row]
        if not others:
            i += 1
            continue
        G = np.vstack([A[others], A[row]])
        g = np.r_[b[others], b[row] + 1.0]
        res = lp_solve(LpProblem(-A[row], G, g))
        if res.status is LpStatus.INFEASIBLE:
            raise EmptySet("half-space system is infeasible")
        if res.ok and -res.objective <= b[row] + eps:
            keep.pop(i)
        else:
            i += 1
    return A[keep], b[keep]


def _in_hull_lp(p, Q):
    """Feasibility of ``p = Q.T @ mu, mu >= 0, sum(mu) = 1``."""
    m = Q.shape[0]
    E = np.vstack([Q.T, np.ones((1, m))])
    e = np.r_[p, 1.0]
    res = lp_solve(LpProblem(np.zeros(m), -np.eye(m), np.zeros(m), E, e))
    return res.ok


def remove_redundant_vertices(points, eps: float = EPS_GEOM) -> np.ndarray:
    P = np.atleast_2d(np.asarray(points, float))
    # merge near-duplicates first
    uniq = []
    for p in P:
        if not any(np.abs(p - q).max() <= eps for q in uniq):
            uniq.append(p)
    keep = list(range(len(uniq)))
    U = np.array(uniq)
    i = 0
    while i < len(keep):
        others = [k for k in keep if k != keep[i]]
        if others and _in_hull_lp(U[keep[i]], U[others]):
            keep.pop(i)
        else:
            i += 1
    return U[keep]


# ---------------------------------------------------------------------------
# projection

def fourier_motzkin(A, b, n_keep: int, eps: float = EPS_GEOM, prune: bool = True):
    """Eliminate coordinates ``n_keep..`` from ``{(x, y) : A [x; y] <= b}``.

    Redundant rows are removed by LP after every elimination step.  With
    ``prune=False`` the final step is left unpruned, for callers that pass
    the result straight to :func:`vrep_from_hrep` (which is exact).
    """
    A, b = _normalize(A, b)
    if not 0 < n_keep <= A.shape[1]:
        raise DimensionMismatch(f"cannot keep {n_keep} of {A.shape[1]} coordinates")
    while A.shape[1] > n_keep:
        k = A.shape[1] - 1
        col = A[:, k]
        pos, neg = np.nonzero(col > eps)[0], np.nonzero(col < -eps)[0]
        zero = np.nonzero(np.abs(col) <= eps)[0]
        rows = [A[zero, :k]]
        rhs = [b[zero]]
        if pos.size and neg.size:
            Ap, bp = A[pos] / col[pos, None], b[pos] / col[pos]
            An, bn = A[neg] / -col[neg, None], b[neg] / -col[neg]
            rows.append((Ap[:, None, :k] + An[None, :, :k]).reshape(-1, k))
            rhs.append((bp[:, None] + bn[None, :]).ravel())
        A, b = np.vstack(rows), np.concatenate(rhs)
        if prune or A.shape[1] > n_keep:
            A, b = remove_redundant_halfspaces(A, b, eps)
        else:
            A, b = _normalize(A, b)
    return A, b


def project(P: Polytope, n: int) -> Polytope:
    """Projection of ``P`` onto its first ``n`` coordinates."""
    if not 0 < n <= P.dim:
        raise DimensionMismatch(f"cannot project a {P.dim}-D polytope onto {n} coordinates")
    A, b = fourier_motzkin(P.A, P.b, n)
    return vrep_from_hrep(A, b)


def same_set(P: Polytope, Q: Polytope, eps: float = EPS_GEOM) -> bool:
    return contains_set(P, Q, eps) and contains_set(Q, P, eps)


def as_points(X) -> np.ndarray:
    return _points(X)


__all__: Sequence[str] = [
    "EPS_GEOM", "Polytope", "require_pc", "convex_hull", "hrep_from_vrep", "vrep_from_hrep",
    "chebyshev_center", "gauge", "set_gauge", "hausdorff_origin", "minkowski_homothety",
    "scale", "translate", "linear_image", "contains_set", "intersect",
    "remove_redundant_halfspaces", "remove_redundant_vertices", "fourier_motzkin",
    "project", "same_set", "as_points",
]
