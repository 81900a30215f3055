"""Closed-loop simulation under random or scripted scheduling."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import Infeasible
from .online import MpcConfig, solve_step


class InfeasibleStart(Infeasible):
    pass


@dataclass
class StepRecord:
    k: int
    x: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    V: float
    stage: float
    n_d: int
    n_ineq: int
    status: str
    gamma: float = float("nan")
    alpha: list = field(default_factory=list)


@dataclass
class SimulationRun:
    records: list[StepRecord]
    x_final: np.ndarray
    seed: int | None
    policy: str
    info: dict = field(default_factory=dict)

    @property
    def states(self) -> np.ndarray:
        return np.vstack([r.x for r in self.records] + [self.x_final[None]])

    @property
    def inputs(self) -> np.ndarray:
        return np.vstack([r.u for r in self.records])

    @property
    def thetas(self) -> np.ndarray:
        return np.vstack([r.theta for r in self.records])

    @property
    def values(self) -> np.ndarray:
        return np.array([r.V for r in self.records])

    @property
    def stages(self) -> np.ndarray:
        return np.array([r.stage for r in self.records])

    @property
    def feasible(self) -> bool:
        return all(r.status == "optimal" for r in self.records)

    def rows(self) -> tuple[list[str], list[list]]:
        nx, nu, nt = self.records[0].x.size, self.records[0].u.size, self.records[0].theta.size
        head = (["k"] + [f"x{i + 1}" for i in range(nx)] + [f"u{i + 1}" for i in range(nu)]
                + [f"theta{i + 1}" for i in range(nt)] + ["V", "n_d", "n_ineq", "status"])
        out = []
        for r in self.records:
            out.append([r.k, *map(repr, r.x.tolist()), *map(repr, r.u.tolist()),
                        *map(repr, r.theta.tolist()), repr(r.V), r.n_d, r.n_ineq, r.status])
        return head, out

    def write_csv(self, path):
        head, rows = self.rows()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            w.writerows(rows)

    def write_diagnostics(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "V", "stage", "gamma", "n_d", "n_ineq", "status", "alpha"])
            for r in self.records:
                w.writerow([r.k, repr(r.V), repr(r.stage), repr(r.gamma), r.n_d, r.n_ineq,
                            r.status, " ".join(repr(a) for a in r.alpha)])


class SchedulingPolicy:
    """Source of ``theta(k)``: ``random``, ``constant`` or ``scripted``.

    ``random`` draws Dirichlet(1, ..., 1) weights over the vertices of Theta.
    """

    def __init__(self, vertices, kind: str = "random", seed: int | None = None,
                 theta0=None, script=None):
        self.V = np.atleast_2d(vertices)
        self.kind = kind
        self.rng = np.random.default_rng(seed)
        self.theta0 = None if theta0 is None else np.asarray(theta0, float)
        if kind == "scripted":
            if script is None:
                raise ValueError("scripted scheduling needs a trajectory")
            if isinstance(script, (str, Path)):
                script = np.loadtxt(script, delimiter=",", ndmin=2)
            self.script = np.atleast_2d(np.asarray(script, float))
        elif kind == "constant":
            if self.theta0 is None:
                raise ValueError("constant scheduling needs theta0")
        elif kind != "random":
            raise ValueError(f"unknown scheduling policy {kind!r}")

    def __call__(self, k: int) -> np.ndarray:
        if self.kind == "scripted":
            return self.script[min(k, self.script.shape[0] - 1)]
        if self.kind == "constant" or (k == 0 and self.theta0 is not None):
            return self.theta0
        w = self.rng.dirichlet(np.ones(self.V.shape[0]))
        return w @ self.V


def simulate(cfg: MpcConfig, x0, steps: int, policy: SchedulingPolicy | str = "random",
             seed: int | None = None, theta0=None, script=None) -> SimulationRun:
    """Apply the receding-horizon controller for ``steps`` samples.

    An infeasible LP after the first step raises :class:`Infeasible` with
    the partial run attached as ``exc.run``.
    """
    sys = cfg.sys
    x = np.asarray(x0, float).ravel()
    if not sys.X.contains(x):
        raise InfeasibleStart(f"x0={x.tolist()} violates the state constraints")
    if isinstance(policy, str):
        policy = SchedulingPolicy(sys.theta_vertices, policy, seed, theta0, script)
    Q, R = cfg.Q, cfg.R
    records = []
    for k in range(steps):
        theta = policy(k)
        try:
            sol = solve_step(cfg, k, x, theta)
        except Infeasible as exc:
            run = SimulationRun(records, x, seed, policy.kind)
            if k == 0:
                raise InfeasibleStart(str(exc), where=0) from None
            exc.run = run
            raise
        stage = float(np.abs(Q @ x).max() + np.abs(R @ sol.u).max())
        records.append(StepRecord(k, x.copy(), sol.u.copy(), np.asarray(theta, float).copy(),
                                  sol.value, stage, sol.n_d, sol.n_ineq, sol.status,
                                  sol.gamma, sol.alpha.tolist()))
        x = sys.A0 @ x + np.tensordot(theta, sys.Ai, axes=1) @ x + sys.B @ sol.u
    return SimulationRun(records, x, seed, policy.kind)


def value_decrease_margin(run: SimulationRun) -> np.ndarray:
    """``V(k+1) - V(k) + stage(k)``; nonpositive when the value decrease holds."""
    V, st = run.values, run.stages
    return V[1:] - V[:-1] + st[:-1]
