"""Controlled (M, lambda)-contractive set sequences.

A sequence ``S_0, ..., S_{M-1}`` of PC-sets is controlled (M, lambda)
contractive when a periodic vertex controller maps every vertex of ``S_i``
into ``S_{i+1}`` for each scheduling vertex, and the last set into
``lambda * S_0``.  This module verifies such sequences and synthesizes them
in three ways: the maximal lambda-contractive set (M = 1) by backward
iteration, forward propagation of a chosen ``S_0`` under a stabilizing
controller, and a search for the smallest M over the scheduling-vertex tree.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import (DegenerateInput, DegenerateSet, EmptyResult, EmptySet, NoContraction,
                     NoConvergence, StateConstraintViolated, Unbounded)
from .lp import LpProblem, LpStatus, lp_solve
from .lpv import LpvSystem
from .polytope import (Polytope, contains_set, fourier_motzkin, hrep_from_vrep,
                       remove_redundant_vertices, scale, vrep_from_hrep)

log = logging.getLogger(__name__)

VERIFY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ContractiveSequence:
    """Sets ``S_0..S_{M-1}``, contraction factor and vertex control table.

    ``controls[i]`` has shape ``(t_i, q, n_u)``: the input applied at vertex
    ``j`` of ``S_i`` for scheduling vertex ``l``.
    """

    sets: tuple[Polytope, ...]
    lam: float
    controls: tuple[np.ndarray, ...] | None = None

    @property
    def M(self) -> int:
        return len(self.sets)

    def sigma(self, k: int) -> int:
        return k % self.M

    def target(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Half-spaces of the set vertex successors of ``S_i`` must reach."""
        if i < self.M - 1:
            S = self.sets[i + 1]
            return S.A, S.b
        S0 = self.sets[0]
        return S0.A, self.lam * S0.b

    def vertex_counts(self) -> list[int]:
        return [S.n_vertices for S in self.sets]

    def with_controls(self, controls) -> "ContractiveSequence":
        return ContractiveSequence(self.sets, self.lam,
                                   tuple(np.asarray(c, float) for c in controls))

    def to_dict(self) -> dict:
        d = {"lambda": self.lam, "M": self.M, "sets": [S.to_dict() for S in self.sets]}
        if self.controls is not None:
            d["controls"] = [c.tolist() for c in self.controls]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ContractiveSequence":
        sets = tuple(Polytope.from_dict(s) for s in d["sets"])
        ctrl = d.get("controls")
        if ctrl is not None:
            ctrl = tuple(np.asarray(c, float) for c in ctrl)
            # vertex order of a re-hulled set can differ from the stored one
            sets = tuple(Polytope(np.asarray(s["vertices"], float), S.A, S.b)
                         for s, S in zip(d["sets"], sets))
        return cls(sets, float(d["lambda"]), ctrl)


@dataclass
class VerificationReport:
    ok: bool
    failures: list[tuple] = field(default_factory=list)
    controls: tuple[np.ndarray, ...] | None = None

    def __bool__(self):
        return self.ok


def _vertex_control_lp(sys: LpvSystem, Al, x, HT, hT, objective: str = "feasible",
                       tol: float = 0.0):
    """Find ``u`` in U with ``HT (Al x + B u) <= hT``.

    ``objective="min_norm"`` minimizes ``||u||_inf`` instead of returning any
    feasible point.  Returns None when infeasible.
    """
    nu = sys.nu
    HU, hU = sys.U.A, sys.U.b
    rows = [np.hstack([HT @ sys.B, np.zeros((HT.shape[0], 1))]),
            np.hstack([HU, np.zeros((HU.shape[0], 1))])]
    rhs = [hT + tol - HT @ (Al @ x), hU]
    c = np.zeros(nu + 1)
    if objective == "min_norm":
        c[-1] = 1.0
        eye = np.eye(nu)
        rows += [np.hstack([eye, -np.ones((nu, 1))]), np.hstack([-eye, -np.ones((nu, 1))])]
        rhs += [np.zeros(nu), np.zeros(nu)]
    else:
        rows.append(np.r_[np.zeros(nu), 1.0][None])
        rows.append(np.r_[np.zeros(nu), -1.0][None])
        rhs += [np.zeros(1), np.zeros(1)]
    res = lp_solve(LpProblem(c, np.vstack(rows), np.concatenate(rhs)))
    if not res.ok:
        return None
    return res.y[:nu]


def verify_sequence(sys: LpvSystem, seq: ContractiveSequence,
                    tol: float = VERIFY_TOL) -> VerificationReport:
    """Check the contraction conditions at all ``(i, j, l)`` vertex triples.

    Missing controls are computed by one feasibility LP per triple.  Failures
    are reported as tuples: ``("not_pc", i)``, ``("outside_X", i)``,
    ``("input", i, j, l)`` or ``("successor", i, j, l)``.
    """
    failures = []
    for i, S in enumerate(seq.sets):
        if not S.is_pc_set():
            failures.append(("not_pc", i))
        if not contains_set(sys.X, S, tol):
            failures.append(("outside_X", i))
    Avs = sys.vertex_matrices()
    controls = []
    for i, S in enumerate(seq.sets):
        HT, hT = seq.target(i)
        given = None if seq.controls is None else seq.controls[i]
        if given is not None and given.shape != (S.n_vertices, sys.q, sys.nu):
            raise ValueError(f"controls[{i}] has shape {given.shape}, expected "
                             f"{(S.n_vertices, sys.q, sys.nu)}")
        Ci = np.full((S.n_vertices, sys.q, sys.nu), np.nan)
        for j, v in enumerate(S.vertices):
            for l, Al in enumerate(Avs):
                if given is None:
                    # exact first; the relaxed retry keeps half the tolerance as
                    # margin so the returned table passes a re-check
                    u = _vertex_control_lp(sys, Al, v, HT, hT)
                    if u is None:
                        u = _vertex_control_lp(sys, Al, v, HT, hT, tol=0.5 * tol)
                    if u is None:
                        failures.append(("successor", i, j, l))
                        continue
                else:
                    u = given[j, l]
                    if not np.all(sys.U.A @ u <= sys.U.b + tol):
                        failures.append(("input", i, j, l))
                    if not np.all(HT @ (Al @ v + sys.B @ u) <= hT + tol):
                        failures.append(("successor", i, j, l))
                Ci[j, l] = u
        controls.append(Ci)
    return VerificationReport(not failures, failures, tuple(controls))


# ---------------------------------------------------------------------------
# maximal lambda-contractive set

def pre_contractive(sys: LpvSystem, Omega: Polytope, lam: float, scheduled: bool = True,
                    prune: bool = True):
    """Half-spaces of the one-step lambda-contractive pre-image of ``Omega``.

    With ``scheduled=True`` (the default) the input may depend on the
    measured scheduling vertex: the result is the intersection over ``l`` of
    ``{x : exists u in U, A(theta_l) x + B u in lam*Omega}``.  With
    ``scheduled=False`` a single input must serve all vertices.
    """
    nx = sys.nx
    H, h = Omega.A, Omega.b
    HU = np.hstack([np.zeros((sys.U.n_facets, nx)), sys.U.A])
    blocks = [np.hstack([H @ Al, H @ sys.B]) for Al in sys.vertex_matrices()]
    if not scheduled:
        G = np.vstack(blocks + [HU])
        g = np.concatenate([lam * h] * len(blocks) + [sys.U.b])
        return fourier_motzkin(G, g, nx, prune=prune)
    As, bs = [], []
    for blk in blocks:
        A, b = fourier_motzkin(np.vstack([blk, HU]), np.r_[lam * h, sys.U.b], nx, prune=prune)
        As.append(A)
        bs.append(b)
    return np.vstack(As), np.concatenate(bs)


def maximal_contractive_set(sys: LpvSystem, lam: float, max_iter: int = 500,
                            scheduled: bool = True) -> Polytope:
    """Fixed point of ``Omega <- Pre_lam(Omega) & Omega`` started from X.

    Stops once the new iterate contains the previous one within EPS_GEOM.
    """
    if not 0 < lam < 1:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    Omega = sys.X
    for it in range(1, max_iter + 1):
        A, b = pre_contractive(sys, Omega, lam, scheduled, prune=False)
        try:
            new = vrep_from_hrep(np.vstack([A, Omega.A]), np.concatenate([b, Omega.b]))
        except (EmptySet, DegenerateInput, Unbounded) as exc:
            raise EmptyResult(f"contractive set collapsed at iteration {it}: {exc}") from None
        if not new.is_pc_set():
            raise EmptyResult(f"origin left the interior at iteration {it}")
        log.debug("maxset iteration %d: %d vertices", it, new.n_vertices)
        if contains_set(new, Omega):
            return new
        Omega = new
    raise NoConvergence(f"no fixed point after {max_iter} iterations")


def choose_initial_set(Omega: Polytope, n_vertices: int = 4) -> Polytope:
    """Pick ``n_vertices`` extreme points of ``Omega`` spanning the largest hull.

    Only subsets whose hull keeps the origin in its interior qualify.  Ties
    in area go to the subset with the largest smallest angular gap between
    consecutive vertices (2-D polar angle).
    """
    V = Omega.vertices
    if Omega.dim != 2:
        raise NotImplementedError("initial-set selection is implemented for planar sets")
    if V.shape[0] <= n_vertices:
        return Omega
    ang = np.arctan2(V[:, 1], V[:, 0])
    best, best_key = None, None
    for idx in itertools.combinations(range(V.shape[0]), n_vertices):
        a = np.sort(ang[list(idx)])
        gaps = np.diff(np.r_[a, a[0] + 2 * np.pi])
        if gaps.max() >= np.pi - 1e-12:
            continue
        try:
            P = hrep_from_vrep(V[list(idx)])
        except DegenerateInput:
            continue
        if not P.is_pc_set():
            continue
        key = (round(_area_2d(P.vertices), 9), gaps.min())
        if best_key is None or key > best_key:
            best, best_key = P, key
    if best is None:
        raise EmptyResult("no vertex subset contains the origin")
    return best


def _area_2d(V):
    x, y = V[:, 0], V[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


# ---------------------------------------------------------------------------
# forward propagation

def gauge_controller(sys: LpvSystem, shape: Polytope) -> Callable:
    """Controller picking, per scheduling vertex, the input minimizing the
    gauge of the successor with respect to ``shape`` (subject to U and X)."""
    nu = sys.nu
    H, h = shape.A, shape.b
    HX, hX = sys.X.A, sys.X.b
    HU, hU = sys.U.A, sys.U.b

    def control(x, theta):
        Al = sys.a_of_theta(theta)
        c = np.r_[np.zeros(nu), 1.0]
        G = np.vstack([
            np.hstack([H @ sys.B, -h[:, None]]),
            np.hstack([HX @ sys.B, np.zeros((HX.shape[0], 1))]),
            np.hstack([HU, np.zeros((HU.shape[0], 1))]),
        ])
        g = np.concatenate([-H @ (Al @ x), hX - HX @ (Al @ x), hU])
        res = lp_solve(LpProblem(c, G, g))
        if not res.ok:
            raise StateConstraintViolated(-1, f"no admissible input at x={x}, theta={theta}")
        return res.y[:nu]

    return control


def forward_propagation_synthesis(sys: LpvSystem, S0: Polytope, lam: float, M_max: int,
                                  controller: Callable | None = None,
                                  reference: Polytope | None = None) -> ContractiveSequence:
    """Propagate ``S0`` under a vertex controller until ``S_M`` lies in ``lam*S0``.

    ``controller(x, theta)`` returns the input at point ``x`` for the
    scheduling vertex ``theta``.  By default the gauge controller of ``reference`` (the
    maximal contractive set if given, else ``S0``) is used.
    """
    if controller is None:
        controller = gauge_controller(sys, reference if reference is not None else S0)
    if not contains_set(sys.X, S0):
        raise StateConstraintViolated(0)
    Avs = sys.vertex_matrices()
    lamS0 = scale(S0, lam)
    sets, controls = [S0], []
    for m in range(1, M_max + 1):
        S = sets[-1]
        U_m = np.array([[np.atleast_1d(controller(v, th)) for th in sys.theta_vertices]
                        for v in S.vertices])
        succ = np.array([Al @ v + sys.B @ U_m[j, l]
                         for j, v in enumerate(S.vertices) for l, Al in enumerate(Avs)])
        controls.append(U_m)
        if not contains_set(sys.X, succ):
            raise StateConstraintViolated(m)
        if contains_set(lamS0, succ):
            try:
                hrep_from_vrep(succ)
            except DegenerateInput:
                log.warning("image of S_%d is lower-dimensional", m - 1)
            seq = ContractiveSequence(tuple(sets), lam, tuple(controls))
            rep = verify_sequence(sys, seq)
            if not rep.ok:
                raise NoContraction(f"synthesized sequence failed verification: {rep.failures}")
            return seq
        try:
            nxt = hrep_from_vrep(remove_redundant_vertices(succ))
        except DegenerateInput:
            raise DegenerateSet(f"propagated set S_{m} is lower-dimensional") from None
        if not nxt.is_pc_set():
            raise DegenerateSet(f"propagated set S_{m} does not contain the origin")
        sets.append(nxt)
        log.debug("forward propagation: S_%d has %d vertices", m, nxt.n_vertices)
    raise NoContraction(f"no contraction within M_max={M_max} steps")


# ---------------------------------------------------------------------------
# smallest-M tree search

def tree_size(t0: int, q: int, depth: int) -> int:
    return t0 * q ** depth


def _tree_lp(sys: LpvSystem, S0: Polytope, lam: float, M: int, tol: float = 0.0):
    nx, nu, q = sys.nx, sys.nu, sys.q
    t0 = S0.n_vertices
    Avs = sys.vertex_matrices()
    # node states at depth 1..M, edge controls at depth 0..M-1
    n_nodes = [tree_size(t0, q, d) for d in range(M + 1)]
    x_off, off = [None], 0
    for d in range(1, M + 1):
        x_off.append(off)
        off += n_nodes[d] * nx
    u_off = []
    for d in range(M):
        u_off.append(off)
        off += n_nodes[d + 1] * nu
    nvar = off
    Erows, Ecols, Evals, e = [], [], [], []
    Grows, Gcols, Gvals, g = [], [], [], []
    r_eq = r_in = 0

    def add_ineq(H, h, cols_x, const):
        nonlocal r_in
        # H @ (x at cols_x) <= h - H @ const
        for a, bi in zip(H, h):
            for c_idx, coef in zip(cols_x, a):
                if coef != 0.0:
                    Grows.append(r_in)
                    Gcols.append(c_idx)
                    Gvals.append(coef)
            g.append(bi - (a @ const if const is not None else 0.0))
            r_in += 1

    HX, hX = sys.X.A, sys.X.b
    HU, hU = sys.U.A, sys.U.b
    # leaves may touch lam*S0 within the verification tolerance; vertices of
    # a maximal set map exactly onto its boundary
    HL, hL = S0.A, lam * S0.b + tol
    for d in range(M):
        for p in range(n_nodes[d]):
            for l in range(q):
                child = p * q + l
                xc = [x_off[d + 1] + child * nx + r for r in range(nx)]
                uc = [u_off[d] + child * nu + r for r in range(nu)]
                # child - A_l parent - B u = 0
                for r in range(nx):
                    Erows.append(r_eq); Ecols.append(xc[r]); Evals.append(1.0)
                    for s in range(nu):
                        if sys.B[r, s] != 0.0:
                            Erows.append(r_eq); Ecols.append(uc[s]); Evals.append(-sys.B[r, s])
                    if d == 0:
                        e.append(Avs[l][r] @ S0.vertices[p])
                    else:
                        for s in range(nx):
                            if Avs[l][r, s] != 0.0:
                                Erows.append(r_eq)
                                Ecols.append(x_off[d] + p * nx + s)
                                Evals.append(-Avs[l][r, s])
                        e.append(0.0)
                    r_eq += 1
                add_ineq(HU, hU, uc, None)
                if d + 1 < M:
                    add_ineq(HX, hX, xc, None)
                else:
                    add_ineq(HL, hL, xc, None)
    G = sp.csr_matrix((Gvals, (Grows, Gcols)), shape=(r_in, nvar))
    E = sp.csr_matrix((Evals, (Erows, Ecols)), shape=(r_eq, nvar))
    prob = LpProblem(np.zeros(nvar), G, np.array(g), E, np.array(e))
    return prob, n_nodes, x_off, u_off


def smallest_m_search(sys: LpvSystem, S0: Polytope, lam: float, M_max: int,
                      tol: float = VERIFY_TOL) -> ContractiveSequence:
    """Smallest M for which the vertex tree of depth M can be steered into ``lam*S0``.

    Cost grows like ``t0 * q**M``; keep ``M_max`` small.
    """
    if not contains_set(sys.X, S0):
        raise StateConstraintViolated(0)
    nx = sys.nx
    for M in range(1, M_max + 1):
        prob, n_nodes, x_off, u_off = _tree_lp(sys, S0, lam, M, 0.1 * tol)
        res = lp_solve(prob)
        if res.status is not LpStatus.OPTIMAL:
            log.debug("tree search: M=%d infeasible", M)
            continue
        y = res.y
        states = [S0.vertices]
        for d in range(1, M):
            states.append(y[x_off[d]:x_off[d] + n_nodes[d] * nx].reshape(-1, nx))
        sets = [S0]
        for d in range(1, M):
            try:
                Sd = hrep_from_vrep(remove_redundant_vertices(states[d]))
            except DegenerateInput:
                raise DegenerateSet(f"tree level {d} is lower-dimensional") from None
            sets.append(Sd)
        seq = ContractiveSequence(tuple(sets), lam)
        rep = verify_sequence(sys, seq)
        if not rep.ok:
            raise NoContraction(f"tree solution failed verification: {rep.failures}")
        return seq.with_controls(rep.controls)
    raise NoContraction(f"no contraction within M_max={M_max} steps")


# ---------------------------------------------------------------------------
# interpolated vertex controller and set propagation

class VertexController:
    """Periodic controller interpolating a vertex control table.

    Inside ``S_i`` the state is written as a conic combination of the
    vertices of one boundary simplex (fan triangulation from the origin), so
    the control is continuous and positively homogeneous.  The scheduling
    variable is interpolated with convex multipliers over Theta's vertices.
    """

    def __init__(self, sys: LpvSystem, seq: ContractiveSequence):
        if seq.controls is None:
            raise ValueError("sequence carries no vertex controls")
        self.sys, self.seq = sys, seq
        self._fans = [_fan(S) for S in seq.sets]

    def multipliers(self, i: int, x) -> tuple[np.ndarray, np.ndarray]:
        """Vertex indices and nonnegative weights with ``x = sum w_j s_j``."""
        S = self.seq.sets[i]
        x = np.asarray(x, float)
        if np.abs(x).max() == 0.0:
            return np.zeros(0, int), np.zeros(0)
        ratios = (S.A @ x) / S.b
        best_err, best = np.inf, None
        for f in np.argsort(-ratios):
            for simplex in self._fans[i][f]:
                Vs = S.vertices[list(simplex)].T
                w = np.linalg.lstsq(Vs, x, rcond=None)[0]
                err = max(-w.min(), np.abs(Vs @ w - x).max())
                if err < best_err:
                    best_err, best = err, (np.array(simplex), np.maximum(w, 0.0))
                if err <= 1e-10:
                    return best
        return best

    def control_at_vertex(self, i: int, x, l: int) -> np.ndarray:
        idx, w = self.multipliers(i, x)
        if idx.size == 0:
            return np.zeros(self.sys.nu)
        return w @ self.seq.controls[i][idx, l]

    def control(self, i: int, x, theta) -> np.ndarray:
        eta = theta_multipliers(self.sys.Theta.vertices, theta)
        return sum(e * self.control_at_vertex(i, x, l) for l, e in enumerate(eta) if e > 0)

    def propagate(self, k: int, X) -> np.ndarray:
        """Vertex successors of ``X`` (points or polytope) at time ``k``."""
        i = self.seq.sigma(k)
        P = X.vertices if isinstance(X, Polytope) else np.atleast_2d(X)
        out = []
        for l, Al in enumerate(self.sys.vertex_matrices()):
            for x in P:
                out.append(Al @ x + self.sys.B @ self.control_at_vertex(i, x, l))
        return np.array(out)


def theta_multipliers(vertices, theta) -> np.ndarray:
    V = np.atleast_2d(vertices)
    theta = np.atleast_1d(np.asarray(theta, float))
    for l, v in enumerate(V):
        if np.abs(v - theta).max() <= 1e-12:
            eta = np.zeros(V.shape[0])
            eta[l] = 1.0
            return eta
    m = V.shape[0]
    E = np.vstack([V.T, np.ones((1, m))])
    res = lp_solve(LpProblem(np.zeros(m), -np.eye(m), np.zeros(m), E, np.r_[theta, 1.0]))
    if not res.ok:
        raise ValueError(f"theta={theta} is outside the scheduling set")
    return np.maximum(res.y, 0.0)


def _fan(S: Polytope):
    """Per facet, the list of vertex-index simplices triangulating that facet."""
    fans = []
    for a, b in zip(S.A, S.b):
        on = np.nonzero(np.abs(S.vertices @ a - b) <= 1e-7 * max(1.0, abs(b)))[0]
        if S.dim <= 2 or on.size == S.dim:
            fans.append([tuple(on)])
            continue
        # 3-D facet polygon: sort around its centroid, fan from the first vertex
        P = S.vertices[on]
        c = P.mean(axis=0)
        e1 = P[0] - c
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(a, e1)
        e2 /= np.linalg.norm(e2)
        order = on[np.argsort(np.arctan2((P - c) @ e2, (P - c) @ e1))]
        fans.append([(order[0], order[r], order[r + 1]) for r in range(1, len(order) - 1)])
    return fans


def gauge_decrease_bound(seq: ContractiveSequence, k: int) -> float:
    """Factor bounding ``Psi_{sigma(k+1)}(G(k, X)) / Psi_{sigma(k)}(X)``."""
    return seq.lam if seq.sigma(k) == seq.M - 1 else 1.0
