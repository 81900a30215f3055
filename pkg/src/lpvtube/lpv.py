"""Constrained LPV model ``x+ = A(theta) x + B u`` and scheduling anticipation."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigMismatch, DimensionMismatch, ThetaOutOfRange
from .polytope import (EPS_GEOM, Polytope, contains_set, intersect, minkowski_homothety)


@dataclass(frozen=True, eq=False)
class LpvSystem:
    """``A(theta) = A0 + sum_i theta_i * Ai[i]`` with constant ``B``.

    ``Theta`` is the scheduling polytope, ``X`` and ``U`` the state and input
    constraint sets.  Vertex order of ``Theta`` is fixed at construction and
    every vertex-indexed control table in the package follows it.
    """

    A0: np.ndarray
    Ai: np.ndarray
    B: np.ndarray
    Theta: Polytope
    X: Polytope
    U: Polytope

    def __post_init__(self):
        A0 = np.atleast_2d(np.asarray(self.A0, float))
        Ai = np.asarray(self.Ai, float)
        if Ai.ndim == 2:
            Ai = Ai[None]
        B = np.asarray(self.B, float)
        if B.ndim == 1:
            B = B[:, None]
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "Ai", Ai)
        object.__setattr__(self, "B", B)
        nx = A0.shape[0]
        if A0.shape != (nx, nx):
            raise DimensionMismatch(f"A0 must be square, got {A0.shape}")
        if Ai.shape[1:] != (nx, nx):
            raise DimensionMismatch(f"each Ai must be {nx}x{nx}, got {Ai.shape[1:]}")
        if B.shape[0] != nx:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {nx}")
        if self.Theta.dim != Ai.shape[0]:
            raise DimensionMismatch(
                f"Theta is {self.Theta.dim}-D but {Ai.shape[0]} scheduling matrices were given")
        if self.X.dim != nx:
            raise DimensionMismatch(f"X is {self.X.dim}-D, state is {nx}-D")
        if self.U.dim != B.shape[1]:
            raise DimensionMismatch(f"U is {self.U.dim}-D, input is {B.shape[1]}-D")

    @property
    def nx(self) -> int:
        return self.A0.shape[0]

    @property
    def nu(self) -> int:
        return self.B.shape[1]

    @property
    def ntheta(self) -> int:
        return self.Ai.shape[0]

    @property
    def q(self) -> int:
        return self.Theta.n_vertices

    @property
    def theta_vertices(self) -> np.ndarray:
        return self.Theta.vertices

    def a_of_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, float))
        if theta.size != self.ntheta:
            raise DimensionMismatch(f"theta has {theta.size} entries, expected {self.ntheta}")
        if not self.Theta.contains(theta):
            warnings.warn(f"theta={theta} lies outside the scheduling set", stacklevel=2)
        return self.A0 + np.tensordot(theta, self.Ai, axes=1)

    def vertex_matrices(self, thetas=None) -> np.ndarray:
        """Stack of ``A(theta)`` over the given points (default: Theta's vertices)."""
        T = self.theta_vertices if thetas is None else np.atleast_2d(thetas)
        return self.A0[None] + np.tensordot(T, self.Ai, axes=1)

    def step(self, x, u, theta) -> np.ndarray:
        return self.a_of_theta(theta) @ np.asarray(x, float) + self.B @ np.atleast_1d(u)


@dataclass
class ValidationReport:
    checks: dict[str, bool] = field(default_factory=dict)
    messages: list[str] = field(default_factory=list)
    q: int = 0

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def validate(sys: LpvSystem) -> ValidationReport:
    """Check the standing assumptions that can be checked directly.

    Stabilizability is not tested here; successful set synthesis certifies it.
    """
    rep = ValidationReport(q=sys.q)
    rep.checks["measurable"] = True
    rep.checks["X_pc_set"] = sys.X.is_pc_set()
    rep.checks["U_pc_set"] = sys.U.is_pc_set()
    rep.checks["theta_polytope"] = sys.q >= sys.ntheta + 1
    for name, ok in rep.checks.items():
        if not ok:
            rep.messages.append(f"{name} failed")
    return rep


FULL = "full"
RATE_BOUNDED = "rate-bounded"


@dataclass(frozen=True, eq=False)
class SchedulingSequence:
    """Anticipated scheduling sets ``Theta_{0|k}, ..., Theta_{N-1|k}``."""

    sets: tuple[Polytope, ...]
    mode: str = FULL
    rate: float | None = None

    @property
    def N(self) -> int:
        return len(self.sets)

    def vertices(self, i: int) -> np.ndarray:
        return self.sets[i].vertices


def make_scheduling_sequence(sys: LpvSystem, theta_now, N: int, mode: str = FULL,
                             rate: float | None = None) -> SchedulingSequence:
    theta_now = np.atleast_1d(np.asarray(theta_now, float))
    if theta_now.size != sys.ntheta:
        raise DimensionMismatch(f"theta has {theta_now.size} entries, expected {sys.ntheta}")
    if not sys.Theta.contains(theta_now):
        raise ThetaOutOfRange(f"theta={theta_now} is outside the scheduling set")
    if N < 1:
        raise ValueError("horizon must be at least 1")
    first = minkowski_homothety(theta_now, 0.0, sys.Theta)
    if mode == FULL:
        rest = [sys.Theta] * (N - 1)
    elif mode == RATE_BOUNDED:
        if rate is None or rate < 0:
            raise ConfigMismatch("rate-bounded scheduling needs a nonnegative rate")
        rest = []
        for i in range(1, N):
            if rate == 0:
                rest.append(first)
                continue
            ball = Polytope.box(theta_now - i * rate, theta_now + i * rate)
            rest.append(intersect(ball, sys.Theta))
    else:
        raise ConfigMismatch(f"unknown scheduling mode {mode!r}")
    return SchedulingSequence(tuple([first] + rest), mode, rate)


def check_continuity(prev: SchedulingSequence, nxt: SchedulingSequence,
                     eps: float = EPS_GEOM) -> bool:
    """``Theta_{i|k+1}`` inside ``Theta_{i+1|k}`` for all shifts."""
    n = min(prev.N - 1, nxt.N)
    return all(contains_set(prev.sets[i + 1], nxt.sets[i], eps) for i in range(n))


def check_well_posed(sys: LpvSystem, seq: SchedulingSequence, eps: float = EPS_GEOM) -> bool:
    return all(contains_set(sys.Theta, S, eps) for S in seq.sets)
