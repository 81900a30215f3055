"""Grid approximation of the region where the tube LP is feasible."""
from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .lp import LpProblem, LpStatus, lp_solve
from .online import MpcConfig, build_tube_lp

FEASIBLE = 1
LP_INFEASIBLE = 0
OUTSIDE_X = -1


@dataclass
class DoaGrid:
    x1: np.ndarray
    x2: np.ndarray
    status: np.ndarray          # (len(x2), len(x1)), FEASIBLE / LP_INFEASIBLE / OUTSIDE_X
    theta0: np.ndarray

    @property
    def feasible(self) -> np.ndarray:
        return self.status == FEASIBLE

    @property
    def n_feasible(self) -> int:
        return int(self.feasible.sum())

    def contains(self, points) -> bool:
        """Whether every point snaps to a feasible cell of the grid."""
        P = np.atleast_2d(points)
        i = np.abs(self.x2[None] - P[:, 1:2]).argmin(axis=1)
        j = np.abs(self.x1[None] - P[:, 0:1]).argmin(axis=1)
        return bool(self.feasible[i, j].all())

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x1", "x2", "status"])
            for a, y in enumerate(self.x2):
                for b, x in enumerate(self.x1):
                    w.writerow([repr(float(x)), repr(float(y)), int(self.status[a, b])])


def grid_axes(cfg: MpcConfig, shape=(41, 101)):
    lo = cfg.sys.X.vertices.min(axis=0)
    hi = cfg.sys.X.vertices.max(axis=0)
    return np.linspace(lo[0], hi[0], shape[0]), np.linspace(lo[1], hi[1], shape[1])


def point_status(cfg: MpcConfig, x, theta0, template: LpProblem | None = None) -> int:
    """Feasibility status of the tube LP at ``x``.

    The state enters the LP only through the right-hand side of the initial
    condition, so a ``template`` built at any state can be reused.
    """
    x = np.asarray(x, float)
    if not cfg.sys.X.contains(x):
        return OUTSIDE_X
    if template is None:
        prob, _ = build_tube_lp(cfg, 0, x, theta0, objective="feasibility")
    else:
        prob = LpProblem(template.c, template.G, template.g, template.E, np.r_[x, 0.0])
    res = lp_solve(prob)
    return FEASIBLE if res.status is LpStatus.OPTIMAL else LP_INFEASIBLE


_WORKER = {}


def _init_worker(cfg, theta0):
    prob, _ = build_tube_lp(cfg, 0, np.zeros(cfg.sys.nx), theta0, objective="feasibility")
    _WORKER.update(cfg=cfg, theta0=theta0, template=prob)


def _row(args):
    y, x1 = args
    w = _WORKER
    return [point_status(w["cfg"], np.array([x, y]), w["theta0"], w["template"]) for x in x1]


def doa_map(cfg: MpcConfig, theta0, shape=(41, 101), x1=None, x2=None,
            workers: int = 1) -> DoaGrid:
    """Feasibility of the tube LP at ``k = 0`` on a grid over the state box."""
    if cfg.sys.nx != 2:
        raise ValueError("grid maps are implemented for two states")
    theta0 = np.asarray(theta0, float)
    if not cfg.sys.Theta.contains(theta0):
        raise ValueError(f"theta0={theta0.tolist()} is outside the scheduling set")
    if x1 is None or x2 is None:
        gx1, gx2 = grid_axes(cfg, shape)
        x1 = gx1 if x1 is None else np.asarray(x1, float)
        x2 = gx2 if x2 is None else np.asarray(x2, float)
    jobs = [(y, x1) for y in x2]
    workers = min(workers, os.cpu_count() or 1)
    if workers <= 1:
        _init_worker(cfg, theta0)
        rows = [_row(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(cfg, theta0)) as ex:
            rows = list(ex.map(_row, jobs, chunksize=4))
    return DoaGrid(np.asarray(x1), np.asarray(x2), np.array(rows, dtype=np.int8), theta0)
