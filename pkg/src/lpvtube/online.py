"""Online tube synthesis with homothetic cross-sections.

At time ``k`` the tube is ``X_i = z_i + alpha_i * S_sigma(k+i)`` for
``i = 0..N`` with ``z_0 = x(k)`` and ``alpha_0 = 0``.  Vertex controls
``u_i^(j,l)`` steer every cross-section vertex ``j`` into the next
cross-section for every vertex ``l`` of the anticipated scheduling set.  At
``i = 0`` the cross-section is the measured state and the scheduling set the
measured ``theta``, so a single input is optimized and applied.  The
terminal cross-section must lie in ``gamma * S_sigma(k+N)`` with
``gamma <= 1``, and ``gamma`` is charged with the terminal weight.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigMismatch, Infeasible
from .lp import LpProblem, LpStatus, lp_solve
from .lpv import FULL, LpvSystem, make_scheduling_sequence
from .polytope import contains_set, minkowski_homothety
from .terminal import TerminalIngredients, terminal_cost_rows

log = logging.getLogger(__name__)

AUDIT_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class MpcConfig:
    sys: LpvSystem
    ing: TerminalIngredients
    N: int
    Q: np.ndarray
    R: np.ndarray
    mode: str = FULL
    rate: float | None = None
    method: str = "highs"

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, float))
        R = np.atleast_2d(np.asarray(self.R, float))
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        nx, nu = self.sys.nx, self.sys.nu
        if self.N < 1:
            raise ConfigMismatch(f"horizon must be at least 1, got {self.N}")
        if Q.shape != (nx, nx) or R.shape != (nu, nu):
            raise ConfigMismatch(f"Q must be {nx}x{nx} and R {nu}x{nu}, got {Q.shape}, {R.shape}")
        if np.linalg.matrix_rank(Q) != nx:
            raise ConfigMismatch("Q must have full rank")
        if not (np.allclose(Q, self.ing.Q) and np.allclose(R, self.ing.R)):
            raise ConfigMismatch("terminal ingredients were computed for different weights")
        if self.ing.seq.sets[0].dim != nx:
            raise ConfigMismatch("terminal sequence does not match the state dimension")


@dataclass
class TubeSolution:
    k: int
    z: np.ndarray                 # (N+1, nx)
    alpha: np.ndarray             # (N+1,)
    controls: list[np.ndarray]    # controls[i] has shape (t_i, q_i, nu); t_0 = q_0 = 1
    u: np.ndarray
    value: float
    cx: np.ndarray
    cu: np.ndarray
    gamma: float
    n_d: int
    n_ineq: int
    n_eq: int
    status: str = "optimal"
    info: dict = field(default_factory=dict)


class _Rows:
    """COO accumulator for ``G y <= g``."""

    def __init__(self):
        self.r, self.c, self.v, self.rhs = [], [], [], []
        self.n = 0

    def add(self, blocks, rhs):
        """``blocks`` is a list of ``(column_index_array, coefficient_matrix)``."""
        rhs = np.atleast_1d(np.asarray(rhs, float))
        m = rhs.size
        rows = self.n + np.arange(m)
        for cols, C in blocks:
            C = np.asarray(C, float).reshape(m, -1)
            rr, cc = np.nonzero(C)
            self.r.append(rows[rr])
            self.c.append(np.asarray(cols)[cc])
            self.v.append(C[rr, cc])
        self.rhs.append(rhs)
        self.n += m

    def matrix(self, n_cols):
        if not self.n:
            return sp.csr_matrix((0, n_cols)), np.zeros(0)
        r = np.concatenate(self.r) if self.r else np.zeros(0, int)
        c = np.concatenate(self.c) if self.c else np.zeros(0, int)
        v = np.concatenate(self.v) if self.v else np.zeros(0)
        return sp.csr_matrix((v, (r, c)), shape=(self.n, n_cols)), np.concatenate(self.rhs)


@dataclass
class _Layout:
    N: int
    nx: int
    nu: int
    t: list[int]
    q: list[int]

    def __post_init__(self):
        N, nx = self.N, self.nx
        self.z0 = 0
        self.a0 = (N + 1) * nx
        self.cx0 = self.a0 + N + 1
        self.cu0 = self.cx0 + N
        self.gam = self.cu0 + N
        self.u0 = []
        off = self.gam + 1
        for i in range(N):
            self.u0.append(off)
            off += self.t[i] * self.q[i] * self.nu
        self.n = off

    def z(self, i):
        return np.arange(self.z0 + i * self.nx, self.z0 + (i + 1) * self.nx)

    def a(self, i):
        return np.array([self.a0 + i])

    def cx(self, i):
        return np.array([self.cx0 + i])

    def cu(self, i):
        return np.array([self.cu0 + i])

    def u(self, i, j, l):
        start = self.u0[i] + (j * self.q[i] + l) * self.nu
        return np.arange(start, start + self.nu)

    def index(self):
        idx = {"z": slice(self.z0, self.a0), "alpha": slice(self.a0, self.cx0),
               "cx": slice(self.cx0, self.cu0), "cu": slice(self.cu0, self.gam),
               "gamma": slice(self.gam, self.gam + 1)}
        for i, s in enumerate(self.u0):
            idx[f"u{i}"] = slice(s, s + self.t[i] * self.q[i] * self.nu)
        return idx


def _step_data(cfg: MpcConfig, k: int, theta_now):
    sys, seq = cfg.sys, cfg.ing.seq
    sched = make_scheduling_sequence(sys, theta_now, cfg.N, cfg.mode, cfg.rate)
    shapes = [seq.sets[seq.sigma(k + i)] for i in range(cfg.N + 1)]
    verts = [np.zeros((1, sys.nx))] + [shapes[i].vertices for i in range(1, cfg.N)]
    thetas = [np.atleast_2d(np.asarray(theta_now, float))] + \
        [sched.vertices(i) for i in range(1, cfg.N)]
    return shapes, verts, thetas


def build_tube_lp(cfg: MpcConfig, k: int, x_now, theta_now,
                  objective: str = "cost") -> tuple[LpProblem, _Layout]:
    """Tube-synthesis LP at time ``k``.

    ``objective="feasibility"`` drops the cost (used for domain-of-attraction
    maps); the constraint set is unchanged.
    """
    sys, ing, N = cfg.sys, cfg.ing, cfg.N
    nx, nu = sys.nx, sys.nu
    x_now = np.asarray(x_now, float).ravel()
    if x_now.size != nx:
        raise ConfigMismatch(f"state has {x_now.size} entries, expected {nx}")
    shapes, verts, thetas = _step_data(cfg, k, theta_now)
    lay = _Layout(N, nx, nu, [v.shape[0] for v in verts], [th.shape[0] for th in thetas])
    HX, hX = sys.X.A, sys.X.b
    HU, hU = sys.U.A, sys.U.b
    B = sys.B
    Q, R = cfg.Q, cfg.R
    one = np.ones((1, 1))
    G = _Rows()
    for i in range(N):
        Hn, hn = shapes[i + 1].A, shapes[i + 1].b
        Al_list = sys.vertex_matrices(thetas[i])
        for j, s in enumerate(verts[i]):
            # |Q (z_i + alpha_i s)|_inf <= cx_i
            for sgn in (1.0, -1.0):
                G.add([(lay.z(i), sgn * Q), (lay.a(i), sgn * (Q @ s)[:, None]),
                       (lay.cx(i), -np.ones((nx, 1)))], np.zeros(nx))
            for l, Al in enumerate(Al_list):
                uc = lay.u(i, j, l)
                # successor A_l (z_i + alpha_i s) + B u inside z_{i+1} + alpha_{i+1} S_next
                G.add([(lay.z(i), Hn @ Al), (lay.a(i), (Hn @ Al @ s)[:, None]),
                       (uc, Hn @ B), (lay.z(i + 1), -Hn), (lay.a(i + 1), -hn[:, None])],
                      np.zeros(hn.size))
                G.add([(lay.z(i), HX @ Al), (lay.a(i), (HX @ Al @ s)[:, None]), (uc, HX @ B)],
                      hX)
                G.add([(uc, HU)], hU)
                for sgn in (1.0, -1.0):
                    G.add([(uc, sgn * R), (lay.cu(i), -np.ones((nu, 1)))], np.zeros(nu))
    Gz, Ga, hf = terminal_cost_rows(ing, k + N)
    G.add([(lay.z(N), Gz), (lay.a(N), Ga[:, None]), (np.array([lay.gam]), -hf[:, None])],
          np.zeros(hf.size))
    G.add([(np.array([lay.gam]), one)], [1.0])

    E = sp.lil_matrix((nx + 1, lay.n))
    for r in range(nx):
        E[r, lay.z0 + r] = 1.0
    E[nx, lay.a0] = 1.0
    e = np.r_[x_now, 0.0]

    c = np.zeros(lay.n)
    if objective == "cost":
        c[lay.cx0:lay.cx0 + N] = 1.0
        c[lay.cu0:lay.cu0 + N] = 1.0
        c[lay.gam] = ing.weight(k + N)
    elif objective != "feasibility":
        raise ValueError(f"unknown objective {objective!r}")
    Gm, g = G.matrix(lay.n)
    return LpProblem(c, Gm, g, E.tocsr(), e, lay.index()), lay


def _unpack(cfg, k, prob, lay, y, value) -> TubeSolution:
    N, nx, nu = cfg.N, cfg.sys.nx, cfg.sys.nu
    z = y[prob.index["z"]].reshape(N + 1, nx)
    alpha = y[prob.index["alpha"]].copy()
    controls = [y[prob.index[f"u{i}"]].reshape(lay.t[i], lay.q[i], nu) for i in range(N)]
    return TubeSolution(k=k, z=z, alpha=alpha, controls=controls, u=controls[0][0, 0].copy(),
                        value=float(value), cx=y[prob.index["cx"]].copy(),
                        cu=y[prob.index["cu"]].copy(), gamma=float(y[lay.gam]),
                        n_d=prob.n_vars, n_ineq=prob.n_ineq, n_eq=prob.n_eq)


def solve_step(cfg: MpcConfig, k: int, x_now, theta_now, audit: bool = True) -> TubeSolution:
    """Optimal tube at time ``k``; raises Infeasible outside the feasible region."""
    prob, lay = build_tube_lp(cfg, k, x_now, theta_now)
    res = lp_solve(prob, cfg.method)
    if res.status is LpStatus.INFEASIBLE:
        raise Infeasible(f"tube LP infeasible at k={k}, x={np.asarray(x_now).tolist()}",
                         where=k)
    if res.status is not LpStatus.OPTIMAL:
        raise Infeasible(f"tube LP {res.status.value} at k={k}", where=k)
    sol = _unpack(cfg, k, prob, lay, res.y, res.objective)
    if audit:
        problems = audit_tube(cfg, sol, x_now, theta_now)
        if problems:
            raise Infeasible(f"tube audit failed at k={k}: {problems[:3]}", where=k)
    return sol


def audit_tube(cfg: MpcConfig, sol: TubeSolution, x_now, theta_now,
               tol: float = AUDIT_TOL) -> list:
    """Re-check every vertex inclusion of a solved tube geometrically."""
    sys, ing, N, k = cfg.sys, cfg.ing, cfg.N, sol.k
    shapes, verts, thetas = _step_data(cfg, k, theta_now)
    bad = []
    if np.abs(sol.z[0] - np.asarray(x_now, float)).max() > tol or abs(sol.alpha[0]) > tol:
        bad.append(("initial", 0))
    if np.any(sol.alpha < -tol):
        bad.append(("alpha", int(np.argmin(sol.alpha))))
    for i in range(N):
        nxt = minkowski_homothety(sol.z[i + 1], max(sol.alpha[i + 1], 0.0), shapes[i + 1])
        for j, s in enumerate(verts[i]):
            x = sol.z[i] + sol.alpha[i] * s
            for l, Al in enumerate(sys.vertex_matrices(thetas[i])):
                u = sol.controls[i][j, l]
                succ = Al @ x + sys.B @ u
                if not sys.U.contains(u, tol):
                    bad.append(("input", i, j, l))
                if not sys.X.contains(succ, tol):
                    bad.append(("state", i, j, l))
                if not contains_set(nxt, succ[None], tol):
                    bad.append(("tube", i, j, l))
    Sf = ing.shape(k + N)
    term = minkowski_homothety(sol.z[N], max(sol.alpha[N], 0.0), Sf)
    if sol.gamma > 1 + tol or not contains_set(minkowski_homothety(
            np.zeros(sys.nx), max(sol.gamma, 0.0), Sf), term, tol):
        bad.append(("terminal", N))
    return bad


def stage_costs(cfg: MpcConfig, sol: TubeSolution, theta_now) -> np.ndarray:
    """Per-step ``max_{j,l} (||Q x_j|| + ||R u_jl||)`` of a solved tube."""
    shapes, verts, _ = _step_data(cfg, sol.k, theta_now)
    out = np.empty(cfg.N)
    for i in range(cfg.N):
        X = sol.z[i] + sol.alpha[i] * verts[i]
        qx = np.abs(X @ cfg.Q.T).max(axis=1)
        ru = np.abs(sol.controls[i] @ cfg.R.T).max(axis=2)
        out[i] = (qx[:, None] + ru).max()
    return out


# ---------------------------------------------------------------------------
# LP dimensions

def closed_form_counts(cfg: MpcConfig, k: int) -> tuple[int, int, int]:
    """Closed-form LP size with controls counted for steps ``0..N``."""
    sys, seq, N = cfg.sys, cfg.ing.seq, cfg.N
    nx, nu, q = sys.nx, sys.nu, sys.q
    rX, rU = sys.X.n_facets, sys.U.n_facets

    def t(i):
        return seq.sets[seq.sigma(k + i)].n_vertices

    def r(i):
        return seq.sets[seq.sigma(k + i)].n_facets

    def qi(i):
        return 1 if i == 0 else q

    n_d = 1 + (N + 1) * (nx + 3) + sum(nu * qi(i) * t(i) for i in range(N + 1))
    n_ineq = 1 + r(N) * t(N) + sum(
        (rX * qi(i) + rU * qi(i) + r(i + 1) * qi(i) + 2 * nx + 2 * nu * qi(i)) * t(i)
        for i in range(N + 1))
    return n_d, n_ineq, nx + 1


def lp_dimensions(cfg: MpcConfig, k: int, theta_now=None) -> dict:
    """Counts of the LP actually built at time ``k`` and the closed-form counts."""
    if theta_now is None:
        theta_now = cfg.sys.theta_vertices[0]
    prob, _ = build_tube_lp(cfg, k, np.zeros(cfg.sys.nx), theta_now)
    pd, pi, pe = closed_form_counts(cfg, k)
    return {"n_d": prob.n_vars, "n_ineq": prob.n_ineq, "n_eq": prob.n_eq,
            "formula_n_d": pd, "formula_n_ineq": pi, "formula_n_eq": pe}


# ---------------------------------------------------------------------------
# controller session

class ControllerSession:
    """Receding-horizon loop state: one ``step`` per sample."""

    def __init__(self, cfg: MpcConfig, k0: int = 0):
        self.cfg = cfg
        self.k = k0
        self.last: TubeSolution | None = None

    def step(self, x, theta) -> tuple[np.ndarray, dict]:
        sol = solve_step(self.cfg, self.k, x, theta)
        self.last = sol
        diag = {"k": self.k, "value": sol.value, "alpha": sol.alpha.tolist(),
                "gamma": sol.gamma, "n_d": sol.n_d, "n_ineq": sol.n_ineq,
                "status": sol.status}
        self.k += 1
        return sol.u, diag


def init(cfg: MpcConfig) -> ControllerSession:
    return ControllerSession(cfg)


def step(session: ControllerSession, x, theta) -> tuple[np.ndarray, dict]:
    return session.step(x, theta)
