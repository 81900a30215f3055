"""Linear programming backend.

Every LP in the package goes through :func:`lp_solve`, which takes an
:class:`LpProblem` of the form::

    minimize    c @ y
    subject to  G @ y <= g
                E @ y == e

with all variables free.  Two backends are available: ``"highs"`` (scipy's
HiGHS interface, the default for the online controller) and ``"simplex"``,
a dense two-phase primal simplex with Bland's rule that is used as an
independent reference on small instances.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import NumericalFailure, SolverFailure

RESIDUAL_TOL = 1e-8
SIMPLEX_FALLBACK_SIZE = 2000


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LpProblem:
    c: np.ndarray
    G: np.ndarray | sp.spmatrix
    g: np.ndarray
    E: np.ndarray | sp.spmatrix | None = None
    e: np.ndarray | None = None
    index: dict[str, slice] = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        if self.G is None:
            self.G = np.zeros((0, n))
            self.g = np.zeros(0)
        elif not sp.issparse(self.G):
            self.G = np.asarray(self.G, dtype=float).reshape(-1, n)
        self.g = np.asarray(self.g, dtype=float).ravel()
        if self.E is None:
            self.E = np.zeros((0, n))
            self.e = np.zeros(0)
        elif not sp.issparse(self.E):
            self.E = np.asarray(self.E, dtype=float).reshape(-1, n)
        self.e = np.asarray(self.e, dtype=float).ravel()
        if self.G.shape != (self.g.size, n) or self.E.shape != (self.e.size, n):
            raise ValueError(
                f"inconsistent LP data: c has {n} entries, G {self.G.shape}, "
                f"g {self.g.size}, E {self.E.shape}, e {self.e.size}")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_ineq(self) -> int:
        return self.g.size

    @property
    def n_eq(self) -> int:
        return self.e.size

    def var(self, y: np.ndarray, name: str) -> np.ndarray:
        return y[self.index[name]]


@dataclass
class LpResult:
    status: LpStatus
    y: np.ndarray | None
    objective: float | None

    @property
    def ok(self) -> bool:
        return self.status is LpStatus.OPTIMAL


def _dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m, dtype=float)


def _check_residuals(problem: LpProblem, y: np.ndarray):
    G, E = problem.G, problem.E
    viol = 0.0
    if problem.n_ineq:
        r = G @ y - problem.g
        scale = 1.0 + np.abs(problem.g)
        viol = max(viol, float(np.max(r / scale)))
    if problem.n_eq:
        r = E @ y - problem.e
        scale = 1.0 + np.abs(problem.e)
        viol = max(viol, float(np.max(np.abs(r) / scale)))
    if viol > RESIDUAL_TOL:
        raise NumericalFailure(f"primal residual {viol:.3e} exceeds {RESIDUAL_TOL:g}")


def lp_solve(problem: LpProblem, method: str = "highs") -> LpResult:
    """Solve ``problem``; infeasible/unbounded are returned, not raised.

    Small problems on which HiGHS cannot decide a status are re-solved with
    the dense simplex.  Raises NumericalFailure when an "optimal" point violates the constraints
    by more than ``RESIDUAL_TOL`` (relative), SolverFailure on any other
    backend error.
    """
    if method == "highs":
        try:
            res = _solve_highs(problem)
        except SolverFailure:
            if problem.n_vars + problem.n_ineq > SIMPLEX_FALLBACK_SIZE:
                raise
            res = simplex(problem)
    elif method == "simplex":
        res = simplex(problem)
    else:
        raise ValueError(f"unknown LP method {method!r}")
    if res.ok:
        _check_residuals(problem, res.y)
    return res


# tight tolerances first; HiGHS occasionally reports an unknown model
# status with them, in which case the defaults are retried
_HIGHS_OPTIONS = (
    {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    {"presolve": False},
    {},
)


def _solve_highs(problem: LpProblem) -> LpResult:
    kw = {}
    if problem.n_ineq:
        kw["A_ub"], kw["b_ub"] = problem.G, problem.g
    if problem.n_eq:
        kw["A_eq"], kw["b_eq"] = problem.E, problem.e
    out = None
    for options in _HIGHS_OPTIONS:
        out = linprog(problem.c, bounds=(None, None), method="highs", options=options, **kw)
        if out.status in (0, 2, 3):
            break
    if out.status == 0:
        return LpResult(LpStatus.OPTIMAL, out.x, float(out.fun))
    if out.status == 2:
        return LpResult(LpStatus.INFEASIBLE, None, None)
    if out.status == 3:
        return LpResult(LpStatus.UNBOUNDED, None, None)
    raise SolverFailure(f"HiGHS returned status {out.status}: {out.message}")


# ---------------------------------------------------------------------------
# dense two-phase simplex (Bland's rule)

_PIV_TOL = 1e-9
_REFRESH = 100


def _pivot(T, row, col):
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]


def _refresh(T, basis, D, cost):
    """Recompute the tableau from the original rows ``D = [A | b]``.

    Pivoting in place accumulates rounding error; rebuilding from the basis
    matrix every few iterations keeps the basic solution accurate.
    """
    m = T.shape[0] - 1
    try:
        body = np.linalg.solve(D[:, basis], D)
    except np.linalg.LinAlgError:
        return
    T[:m] = body
    T[-1] = cost - cost[basis] @ body


def _run(T, basis, n_cols, max_iter, D=None, cost=None):
    """Minimize the objective stored in the last row of ``T`` (reduced costs).

    Columns >= n_cols are never chosen to enter.  Returns False on
    unboundedness.  With ``D`` and ``cost`` given (original rows and cost
    including a zero for the right-hand side) the tableau is rebuilt
    periodically.
    """
    m = T.shape[0] - 1
    for it in range(max_iter):
        if D is not None and it and it % _REFRESH == 0:
            _refresh(T, basis, D, cost)
        cost_row = T[-1, :n_cols]
        candidates = np.nonzero(cost_row < -_PIV_TOL)[0]
        if candidates.size == 0:
            if D is not None:
                _refresh(T, basis, D, cost)
                cost_row = T[-1, :n_cols]
                if not np.any(cost_row < -_PIV_TOL):
                    return True
                continue
            return True
        col = candidates[0]
        column = T[:m, col]
        pos = column > _PIV_TOL * max(1.0, np.abs(column).max())
        if not pos.any():
            return False
        ratios = np.full(m, np.inf)
        ratios[pos] = np.maximum(T[:m, -1][pos], 0.0) / column[pos]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + 1e-12 * max(1.0, abs(best)))[0]
        row = min(ties, key=lambda r: basis[r])
        _pivot(T, row, col)
        basis[row] = col
    raise SolverFailure("simplex iteration limit reached")


def simplex(problem: LpProblem, max_iter: int = 50_000) -> LpResult:
    G, E = _dense(problem.G), _dense(problem.E)
    n = problem.n_vars
    mi, me = problem.n_ineq, problem.n_eq
    m = mi + me
    # columns: y+ (n), y- (n), slacks (mi)
    A = np.zeros((m, 2 * n + mi))
    A[:mi, :n], A[:mi, n:2 * n] = G, -G
    A[:mi, 2 * n:] = np.eye(mi)
    A[mi:, :n], A[mi:, n:2 * n] = E, -E
    b = np.concatenate([problem.g, problem.e])
    neg = b < 0
    A[neg] *= -1.0
    b = np.abs(b)
    nv = A.shape[1]

    # phase 1 with one artificial per row
    D1 = np.hstack([A, np.eye(m), b[:, None]])
    cost1 = np.r_[np.zeros(nv), np.ones(m), 0.0]
    T = np.zeros((m + 1, nv + m + 1))
    T[:m] = D1
    T[-1, :nv] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(nv, nv + m))
    _run(T, basis, nv + m, max_iter, D1, cost1)
    if -T[-1, -1] > 1e-9 * (1.0 + b.sum()):
        return LpResult(LpStatus.INFEASIBLE, None, None)

    # drive remaining artificials out of the basis, drop redundant rows
    keep = []
    for r in range(m):
        if basis[r] >= nv:
            cols = np.nonzero(np.abs(T[r, :nv]) > 1e-9)[0]
            if cols.size:
                _pivot(T, r, cols[0])
                basis[r] = cols[0]
                keep.append(r)
        else:
            keep.append(r)
    T = np.vstack([T[keep][:, list(range(nv)) + [T.shape[1] - 1]], np.zeros(nv + 1)])
    basis = [basis[r] for r in keep]
    D2 = np.hstack([A[keep], b[keep, None]])

    cost = np.concatenate([problem.c, -problem.c, np.zeros(mi)])
    cost2 = np.r_[cost, 0.0]
    _refresh(T, basis, D2, cost2)
    if not _run(T, basis, nv, max_iter, D2, cost2):
        return LpResult(LpStatus.UNBOUNDED, None, None)

    x = np.zeros(nv)
    for r, bv in enumerate(basis):
        x[bv] = T[r, -1]
    y = x[:n] - x[n:2 * n]
    return LpResult(LpStatus.OPTIMAL, y, float(problem.c @ y))
