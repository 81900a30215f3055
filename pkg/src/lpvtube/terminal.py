"""Terminal ingredients built on a controlled (M, lambda)-contractive sequence.

The terminal cost is a scaled set-gauge function

    W(k, X)    = (M + (lambda - 1) sigma(k)) * Psi_{S_sigma(k)}(X)
    Wbar(k, X) = lbar / (1 - rho) * W(k, X)

where ``lbar`` bounds the stage cost of the local periodic vertex
controller on the sets and ``rho`` is the worst per-step contraction rate of
``W``.  All norms are infinity norms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Infeasible
from .invariant import VERIFY_TOL, ContractiveSequence, VertexController
from .lp import LpProblem, lp_solve
from .lpv import LpvSystem
from .polytope import Polytope, set_gauge


def contraction_rates(M: int, lam: float) -> tuple[np.ndarray, float]:
    """Per-phase decrease rates of W and their maximum.

    ``rates[s]`` is the rate applied when ``sigma(k) = s``.  The product over
    one period telescopes to ``lam``.
    """
    if M < 1:
        raise ValueError(f"M must be positive, got {M}")
    if not 0 <= lam < 1:
        raise ValueError(f"lambda must lie in [0, 1), got {lam}")
    rates = np.empty(M)
    for s in range(M - 1):
        rates[s] = (M + (lam - 1) * (s + 1)) / (M + (lam - 1) * s)
    rates[M - 1] = lam * M / (lam * (M - 1) + 1)
    return rates, float(rates[0])


def _inf_norm_rows(W: np.ndarray):
    # |W v|_inf <= t  <=>  [W, -1; -W, -1] [v; t] <= 0
    ones = np.ones((W.shape[0], 1))
    return np.vstack([np.hstack([W, -ones]), np.hstack([-W, -ones])])


def _least_violation(sys: LpvSystem, y, HT, hT):
    """Input in U minimizing the largest violation of ``HT (y + B u) <= hT``."""
    nu = sys.nu
    ones = np.ones((HT.shape[0], 1))
    G = np.vstack([np.hstack([HT @ sys.B, -ones]),
                   np.hstack([sys.U.A, np.zeros((sys.U.n_facets, 1))])])
    g = np.concatenate([hT - HT @ y, sys.U.b])
    res = lp_solve(LpProblem(np.r_[np.zeros(nu), 1.0], G, g))
    if not res.ok:
        return None, np.inf
    return res.y[:nu], float(res.y[-1])


def terminal_vertex_controls(sys: LpvSystem, seq: ContractiveSequence, Q, R,
                             tol: float = VERIFY_TOL) -> tuple[np.ndarray, ...]:
    """Cheapest admissible vertex control for every ``(i, j, l)``.

    The state term of the cost is fixed at a vertex, so each LP minimizes
    ``||R u||_inf`` subject to U and the inclusion of the successor in the
    next set (``lam * S_0`` after the last one).  Vertices that only reach
    the target within the verification tolerance ``tol`` get the input with
    the smallest violation instead.
    """
    R = np.atleast_2d(np.asarray(R, float))
    nu = sys.nu
    HU, hU = sys.U.A, sys.U.b
    norm = _inf_norm_rows(R)
    out = []
    Avs = sys.vertex_matrices()
    for i, S in enumerate(seq.sets):
        HT, hT = seq.target(i)
        Ci = np.empty((S.n_vertices, sys.q, nu))
        G = np.vstack([np.hstack([HT @ sys.B, np.zeros((HT.shape[0], 1))]),
                       np.hstack([HU, np.zeros((HU.shape[0], 1))]),
                       norm])
        c = np.r_[np.zeros(nu), 1.0]
        for j, s in enumerate(S.vertices):
            for l, Al in enumerate(Avs):
                g = np.concatenate([hT - HT @ (Al @ s), hU, np.zeros(norm.shape[0])])
                res = lp_solve(LpProblem(c, G, g))
                if res.ok:
                    Ci[j, l] = res.y[:nu]
                    continue
                u, viol = _least_violation(sys, Al @ s, HT, hT)
                if viol > tol:
                    raise Infeasible(f"no admissible terminal control at vertex {j} of S_{i}, "
                                     f"scheduling vertex {l}", where=(i, j, l))
                Ci[j, l] = u
        out.append(Ci)
    return tuple(out)


def _stage_terms(seq, controls, Q, R):
    Q = np.atleast_2d(np.asarray(Q, float))
    R = np.atleast_2d(np.asarray(R, float))
    xs, us = [], []
    for S, C in zip(seq.sets, controls):
        xs.append(np.abs(S.vertices @ Q.T).max(axis=1))             # (t_i,)
        us.append(np.abs(C @ R.T).max(axis=2))                      # (t_i, q)
    return xs, us


@dataclass(frozen=True, eq=False)
class TerminalIngredients:
    """Everything the terminal cost needs, for one sequence and weighting.

    ``ell_bar_i`` is the vertex maximum of ``||Q s|| + ||R u_f||``.  The
    online problem bounds the state and input terms of the stage cost
    separately, so the terminal weight uses the larger bound
    ``ell_split_i = max_j ||Q s|| + max_{j,l} ||R u_f||`` (see ``lbar_cost``).
    """

    sys: LpvSystem
    seq: ContractiveSequence
    Q: np.ndarray
    R: np.ndarray
    controls: tuple[np.ndarray, ...]
    ell_bar_i: np.ndarray
    ell_bar: float
    ell_split_i: np.ndarray
    rho_k: np.ndarray
    rho: float

    @property
    def M(self) -> int:
        return self.seq.M

    @property
    def lam(self) -> float:
        return self.seq.lam

    @property
    def lbar_cost(self) -> float:
        """Stage-cost bound entering the terminal weight."""
        return float(self.ell_split_i.max())

    def w_factor(self, k: int) -> float:
        return self.M + (self.lam - 1) * self.seq.sigma(k)

    def weight(self, k: int) -> float:
        """Coefficient of the set gauge in the terminal cost at time ``k``."""
        return self.lbar_cost / (1.0 - self.rho) * self.w_factor(k)

    def shape(self, k: int) -> Polytope:
        return self.seq.sets[self.seq.sigma(k)]

    def controller(self) -> VertexController:
        return VertexController(self.sys, self.seq.with_controls(self.controls))

    def to_dict(self) -> dict:
        return {
            "sequence": self.seq.to_dict(),
            "Q": self.Q.tolist(), "R": self.R.tolist(),
            "terminal_controls": [c.tolist() for c in self.controls],
            "ell_bar_i": self.ell_bar_i.tolist(), "ell_bar": self.ell_bar,
            "ell_split_i": self.ell_split_i.tolist(),
            "rho_k": self.rho_k.tolist(), "rho": self.rho,
        }

    @classmethod
    def from_dict(cls, sys: LpvSystem, d: dict) -> "TerminalIngredients":
        seq = ContractiveSequence.from_dict(d["sequence"])
        return cls(sys, seq, np.asarray(d["Q"], float), np.asarray(d["R"], float),
                   tuple(np.asarray(c, float) for c in d["terminal_controls"]),
                   np.asarray(d["ell_bar_i"], float), float(d["ell_bar"]),
                   np.asarray(d["ell_split_i"], float),
                   np.asarray(d["rho_k"], float), float(d["rho"]))


def stage_upper_bounds(seq: ContractiveSequence, controls, Q, R) -> tuple[np.ndarray, float]:
    xs, us = _stage_terms(seq, controls, Q, R)
    ell = np.array([float((x[:, None] + u).max()) for x, u in zip(xs, us)])
    return ell, float(ell.max())


def split_stage_bounds(seq: ContractiveSequence, controls, Q, R) -> np.ndarray:
    xs, us = _stage_terms(seq, controls, Q, R)
    return np.array([float(x.max() + u.max()) for x, u in zip(xs, us)])


def terminal_ingredients(sys: LpvSystem, seq: ContractiveSequence, Q, R) -> TerminalIngredients:
    Q = np.atleast_2d(np.asarray(Q, float))
    R = np.atleast_2d(np.asarray(R, float))
    controls = terminal_vertex_controls(sys, seq, Q, R)
    ell_i, ell = stage_upper_bounds(seq, controls, Q, R)
    rho_k, rho = contraction_rates(seq.M, seq.lam)
    return TerminalIngredients(sys, seq, Q, R, controls, ell_i, ell,
                               split_stage_bounds(seq, controls, Q, R), rho_k, rho)


def lyapunov_w(ing: TerminalIngredients, k: int, X) -> float:
    return ing.w_factor(k) * set_gauge(ing.shape(k), X)


def lyapunov_wbar(ing: TerminalIngredients, k: int, X) -> float:
    return ing.lbar_cost / (1.0 - ing.rho) * lyapunov_w(ing, k, X)


def terminal_gauge(ing: TerminalIngredients, k: int, z, alpha: float) -> float:
    """Set gauge of ``z + alpha * S_sigma(k)`` with respect to ``S_sigma(k)``."""
    S = ing.shape(k)
    z = np.asarray(z, float)
    return float(np.max((S.A @ (z[None] + alpha * S.vertices).T).T / S.b))


def terminal_cost(ing: TerminalIngredients, k: int, z, alpha: float) -> float:
    return ing.weight(k) * terminal_gauge(ing, k, z, alpha)


def terminal_cost_rows(ing: TerminalIngredients, k: int):
    """Linear form of the terminal gauge epigraph.

    Returns ``(Gz, Ga, h)`` such that ``Gz @ z + Ga * alpha <= gamma * h``
    row-wise is equivalent to ``Psi(z + alpha S) <= gamma``.  One row per
    (vertex, facet) pair.
    """
    S = ing.shape(k)
    t = S.n_vertices
    Gz = np.tile(S.A, (t, 1))
    Ga = (S.vertices @ S.A.T).ravel()
    h = np.tile(S.b, t)
    return Gz, Ga, h
