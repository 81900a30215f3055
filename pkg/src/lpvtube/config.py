"""Configuration files and JSON persistence.

A configuration is a YAML document with the sections ``system``, ``mpc``,
``synthesis``, ``simulation`` and ``doa``; see ``data/example5.cfg``.
Polytopes may be given as ``{lower, upper}`` boxes, vertex lists or
half-space lists.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigMismatch
from .invariant import (ContractiveSequence, choose_initial_set, forward_propagation_synthesis,
                        maximal_contractive_set, smallest_m_search)
from .lpv import FULL, RATE_BOUNDED, LpvSystem
from .online import MpcConfig
from .polytope import Polytope
from .terminal import TerminalIngredients, terminal_ingredients

log = logging.getLogger(__name__)

BUILTIN = {"example5": "example5.cfg", "example5.cfg": "example5.cfg"}


@dataclass
class Config:
    sys: LpvSystem
    N: int
    Q: np.ndarray
    R: np.ndarray
    lam: float
    m_max: int
    mode: str = FULL
    rate: float | None = None
    initial_vertices: int = 4
    method: str = "forward"
    x0: np.ndarray | None = None
    theta0: np.ndarray | None = None
    steps: int = 60
    seed: int = 1
    policy: str = "random"
    grid: tuple[int, int] = (41, 101)
    doa_theta0: np.ndarray | None = None
    workers: int = 1
    raw: dict = field(default_factory=dict)


def _matrix(v, name):
    try:
        return np.atleast_2d(np.asarray(v, float))
    except (TypeError, ValueError):
        raise ConfigMismatch(f"{name} is not a numeric matrix") from None


def _read_text(path) -> str:
    key = str(path)
    if key in BUILTIN and not Path(key).exists():
        return resources.files("lpvtube").joinpath("data", BUILTIN[key]).read_text()
    return Path(path).read_text()


def load_config(path) -> Config:
    """Parse a configuration file (or the name of a shipped example)."""
    d = yaml.safe_load(_read_text(path))
    if not isinstance(d, dict) or "system" not in d:
        raise ConfigMismatch("configuration needs a 'system' section")
    return config_from_dict(d)


def config_from_dict(d: dict) -> Config:
    s = d["system"]
    if "Bi" in s and np.any(np.asarray(s["Bi"], float) != 0):
        raise ConfigMismatch("parameter-varying input matrices are not supported; B must be constant")
    try:
        sys = LpvSystem(_matrix(s["A0"], "A0"), np.asarray(s["Ai"], float),
                        _matrix(s["B"], "B"), Polytope.from_dict(s["Theta"]),
                        Polytope.from_dict(s["X"]), Polytope.from_dict(s["U"]))
    except KeyError as exc:
        raise ConfigMismatch(f"system section misses {exc}") from None
    m = d.get("mpc", {})
    syn = d.get("synthesis", {})
    sim = d.get("simulation", {})
    doa = d.get("doa", {})
    mode = m.get("scheduling", FULL)
    if mode not in (FULL, RATE_BOUNDED):
        raise ConfigMismatch(f"unknown scheduling mode {mode!r}")
    Q = _matrix(m.get("Q", np.eye(sys.nx)), "Q")
    R = _matrix(m.get("R", np.eye(sys.nu)), "R")
    if Q.shape != (sys.nx, sys.nx) or np.linalg.matrix_rank(Q) != sys.nx:
        raise ConfigMismatch("Q must be square of full rank")
    if R.shape != (sys.nu, sys.nu):
        raise ConfigMismatch(f"R must be {sys.nu}x{sys.nu}")

    def vec(x):
        return None if x is None else np.asarray(x, float)

    return Config(
        sys=sys, N=int(m.get("N", 8)), Q=Q, R=R,
        lam=float(syn.get("lambda", 0.95)), m_max=int(syn.get("m_max", 5)),
        mode=mode, rate=m.get("rate"), initial_vertices=int(syn.get("initial_vertices", 4)),
        method=syn.get("method", "forward"),
        x0=vec(sim.get("x0")), theta0=vec(sim.get("theta0")),
        steps=int(sim.get("steps", 60)), seed=int(sim.get("seed", 1)),
        policy=sim.get("policy", "random"),
        grid=tuple(int(n) for n in doa.get("grid", (41, 101))),
        doa_theta0=vec(doa.get("theta0")), workers=int(doa.get("workers", 1)), raw=d)


# ---------------------------------------------------------------------------
# synthesis pipeline

def maximal_sequence(cfg: Config, lam: float | None = None) -> ContractiveSequence:
    lam = cfg.lam if lam is None else lam
    Omega = maximal_contractive_set(cfg.sys, lam)
    return ContractiveSequence((Omega,), lam)


def finite_step_sequence(cfg: Config, Omega: Polytope | None = None,
                         lam: float | None = None, m_max: int | None = None) -> ContractiveSequence:
    """Sequence started from a vertex subset of the maximal contractive set."""
    lam = cfg.lam if lam is None else lam
    m_max = cfg.m_max if m_max is None else m_max
    if Omega is None:
        Omega = maximal_contractive_set(cfg.sys, lam)
    S0 = choose_initial_set(Omega, cfg.initial_vertices)
    if cfg.method == "tree":
        return smallest_m_search(cfg.sys, S0, lam, m_max)
    if cfg.method != "forward":
        raise ConfigMismatch(f"unknown synthesis method {cfg.method!r}")
    return forward_propagation_synthesis(cfg.sys, S0, lam, m_max, reference=Omega)


def mpc_config(cfg: Config, seq: ContractiveSequence | None = None,
               ing: TerminalIngredients | None = None, N: int | None = None) -> MpcConfig:
    if ing is None:
        ing = terminal_ingredients(cfg.sys, seq, cfg.Q, cfg.R)
    return MpcConfig(cfg.sys, ing, cfg.N if N is None else N, cfg.Q, cfg.R, cfg.mode, cfg.rate)


# ---------------------------------------------------------------------------
# JSON files

def save_json(obj, path):
    d = obj.to_dict() if hasattr(obj, "to_dict") else obj
    Path(path).write_text(json.dumps(d, indent=1))


def load_polytope(path) -> Polytope:
    return Polytope.from_dict(json.loads(Path(path).read_text()))


def load_sequence(path) -> ContractiveSequence:
    d = json.loads(Path(path).read_text())
    if "sequence" in d:
        d = d["sequence"]
    return ContractiveSequence.from_dict(d)


def load_ingredients(sys: LpvSystem, path) -> TerminalIngredients:
    return TerminalIngredients.from_dict(sys, json.loads(Path(path).read_text()))
