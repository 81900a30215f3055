"""Command line interface: ``lpvtube <command> [options]``.

Exit codes: 0 on success, 2 when a problem is infeasible (empty set, no
contraction, infeasible LP, failed verification), 1 on any other error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import (Config, finite_step_sequence, load_config, load_ingredients, load_sequence,
                     mpc_config, save_json)
from .errors import Infeasible, LpvTubeError, SynthesisError
from .invariant import ContractiveSequence, maximal_contractive_set, verify_sequence
from .online import lp_dimensions
from .doa import doa_map
from .sim import simulate, value_decrease_margin

log = logging.getLogger("lpvtube")

FINITE = "finite"
MAXIMAL = "maximal"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", default="example5.cfg",
                   help="configuration file (default: the shipped example5.cfg)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--lambda", dest="lam", type=float, help="contraction factor")
    p.add_argument("--m-max", dest="m_max", type=int, help="largest sequence length tried")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--steps", type=int, help="simulation length")
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lpvtube", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("maxset", help="maximal lambda-contractive set"))
    p = sub.add_parser("terminal", help="contractive sequence and terminal ingredients")
    _common(p)
    p.add_argument("--terminal", choices=[FINITE, MAXIMAL], default=FINITE)
    p = sub.add_parser("verify", help="check the contraction conditions of a sequence")
    _common(p)
    p.add_argument("--sequence", help="sequence or ingredients JSON (default: synthesize)")
    p = sub.add_parser("mpc-sim", help="closed-loop simulation")
    _common(p)
    p.add_argument("--terminal", choices=[FINITE, MAXIMAL], default=FINITE)
    p.add_argument("--ingredients", help="terminal ingredients JSON written by 'terminal'")
    p.add_argument("--policy", choices=["random", "constant", "scripted"])
    p.add_argument("--script", help="CSV file of scheduling values for --policy scripted")
    p = sub.add_parser("doa", help="grid map of the feasible region")
    _common(p)
    p.add_argument("--terminal", choices=[FINITE, MAXIMAL, "both"], default="both")
    p.add_argument("--workers", type=int)
    p.add_argument("--grid", type=int, nargs=2, metavar=("N1", "N2"))
    p = sub.add_parser("lp-dims", help="LP sizes against the closed-form counts")
    _common(p)
    p.add_argument("--terminal", choices=[FINITE, MAXIMAL, "both"], default="both")
    p.add_argument("--n-max", type=int, default=20)
    return ap


class _Session:
    """Lazily computed synthesis results shared by one command."""

    def __init__(self, cfg: Config, args):
        self.cfg, self.args = cfg, args
        self._omega = None

    @property
    def lam(self):
        return self.cfg.lam if self.args.lam is None else self.args.lam

    @property
    def m_max(self):
        return self.cfg.m_max if self.args.m_max is None else self.args.m_max

    def omega(self):
        if self._omega is None:
            t = time.perf_counter()
            self._omega = maximal_contractive_set(self.cfg.sys, self.lam)
            log.info("maximal set: %d vertices in %.2f s", self._omega.n_vertices,
                     time.perf_counter() - t)
        return self._omega

    def sequence(self, kind):
        if kind == MAXIMAL:
            return ContractiveSequence((self.omega(),), self.lam)
        return finite_step_sequence(self.cfg, self.omega(), self.lam, self.m_max)

    def mpc(self, kind, N=None):
        return mpc_config(self.cfg, self.sequence(kind), N=N)


def _plots(args):
    if args.no_plots:
        return None
    from . import plots
    return plots


def _write_vertices(path, sets):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["set", "vertex"] + [f"x{i + 1}" for i in range(sets[0].dim)])
        for i, S in enumerate(sets):
            for j, v in enumerate(S.vertices):
                w.writerow([i, j, *map(repr, v.tolist())])


def cmd_maxset(s: _Session, out: Path, args) -> int:
    Om = s.omega()
    rep = verify_sequence(s.cfg.sys, ContractiveSequence((Om,), s.lam))
    save_json(Om, out / "maxset.json")
    _write_vertices(out / "maxset.csv", [Om])
    print(f"maximal {s.lam}-contractive set: {Om.n_vertices} vertices, {Om.n_facets} facets, "
          f"verification {'passed' if rep.ok else 'FAILED'}")
    if (pl := _plots(args)):
        pl.plot_sets(out / "maxset.png", [Om], ["maximal set"], s.cfg.sys.X)
    return 0 if rep.ok else 2


def cmd_terminal(s: _Session, out: Path, args) -> int:
    seq = s.sequence(args.terminal)
    mc = mpc_config(s.cfg, seq)
    save_json(seq, out / "sequence.json")
    save_json(mc.ing, out / "ingredients.json")
    _write_vertices(out / "sequence.csv", list(seq.sets))
    ing = mc.ing
    print(f"M = {seq.M}, lambda = {seq.lam}, vertex counts {seq.vertex_counts()}")
    print(f"stage bounds {np.round(ing.ell_bar_i, 6).tolist()} (max {ing.ell_bar:.6g}), "
          f"terminal weight bound {ing.lbar_cost:.6g}, rho = {ing.rho:.6g}")
    if (pl := _plots(args)):
        pl.plot_sets(out / "sequence.png", list(seq.sets), None, s.cfg.sys.X)
    return 0


def cmd_verify(s: _Session, out: Path, args) -> int:
    seq = load_sequence(args.sequence) if args.sequence else s.sequence(FINITE)
    rep = verify_sequence(s.cfg.sys, seq)
    print(f"M = {seq.M}, vertex counts {seq.vertex_counts()}: "
          f"{'passed' if rep.ok else 'FAILED'}")
    for f in rep.failures:
        print("  failure:", f)
    return 0 if rep.ok else 2


def cmd_sim(s: _Session, out: Path, args) -> int:
    cfg = s.cfg
    mc = (mpc_config(cfg, ing=load_ingredients(cfg.sys, args.ingredients))
          if args.ingredients else s.mpc(args.terminal))
    seed = cfg.seed if args.seed is None else args.seed
    steps = cfg.steps if args.steps is None else args.steps
    x0 = cfg.x0 if cfg.x0 is not None else np.zeros(cfg.sys.nx)
    policy = args.policy or cfg.policy
    try:
        run = simulate(mc, x0, steps, policy, seed, cfg.theta0, args.script)
    except Infeasible as exc:
        if getattr(exc, "run", None) is not None and exc.run.records:
            exc.run.write_csv(out / "trajectory.csv")
        raise
    run.write_csv(out / "trajectory.csv")
    run.write_diagnostics(out / "diagnostics.csv")
    margin = value_decrease_margin(run)
    print(f"{steps} steps, final state {run.x_final.tolist()}, "
          f"max value-decrease margin {margin.max() if margin.size else 0.0:.3e}")
    if (pl := _plots(args)):
        pl.plot_trajectory(out / "trajectory.png", run)
    return 0


def cmd_doa(s: _Session, out: Path, args) -> int:
    cfg = s.cfg
    theta0 = cfg.doa_theta0 if cfg.doa_theta0 is not None else cfg.sys.theta_vertices[0]
    shape = tuple(args.grid) if args.grid else cfg.grid
    workers = args.workers or cfg.workers
    kinds = [FINITE, MAXIMAL] if args.terminal == "both" else [args.terminal]
    grids = {}
    for kind in kinds:
        t = time.perf_counter()
        g = doa_map(s.mpc(kind), theta0, shape, workers=workers)
        grids[kind] = g
        g.write_csv(out / f"doa_{kind}.csv")
        print(f"{kind}: {g.n_feasible} of {g.status.size} grid points feasible "
              f"({time.perf_counter() - t:.1f} s)")
    if len(grids) == 2:
        print(f"area ratio finite/maximal = {grids[FINITE].n_feasible / grids[MAXIMAL].n_feasible:.4f}")
    if (pl := _plots(args)):
        pl.plot_doa(out / "doa.png", list(grids.values()), list(grids))
    return 0


def cmd_dims(s: _Session, out: Path, args) -> int:
    kinds = [FINITE, MAXIMAL] if args.terminal == "both" else [args.terminal]
    Ns = list(range(1, args.n_max + 1))
    rows = []
    summary = {}
    for kind in kinds:
        seq = s.sequence(kind)
        base = mpc_config(s.cfg, seq)
        for N in Ns:
            mc = mpc_config(s.cfg, ing=base.ing, N=N)
            for k in range(seq.M):
                d = lp_dimensions(mc, k)
                rows.append([kind, N, k, d["n_d"], d["n_ineq"], d["n_eq"],
                             d["formula_n_d"], d["formula_n_ineq"], d["formula_n_eq"]])
        summary[kind] = [r for r in rows if r[0] == kind]
    with open(out / "lp_dims.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["terminal", "N", "k", "n_d", "n_ineq", "n_eq",
                    "formula_n_d", "formula_n_ineq", "formula_n_eq"])
        w.writerows(rows)
    N0 = min(s.cfg.N, args.n_max)
    for kind, rs in summary.items():
        at = [r for r in rs if r[1] == N0]
        rng = lambda i: f"{min(r[i] for r in at)}-{max(r[i] for r in at)}"  # noqa: E731
        print(f"{kind} (N={N0}): built n_d {rng(3)}, n_ineq {rng(4)}; "
              f"closed form n_d {rng(6)}, n_ineq {rng(7)}")
    if (pl := _plots(args)):
        for kind, rs in summary.items():
            mx = [[max(r[i] for r in rs if r[1] == N) for N in Ns] for i in (3, 4, 6, 7)]
            pl.plot_dims(out / f"lp_dims_{kind}.png", Ns, *mx)
    return 0


COMMANDS = {"maxset": cmd_maxset, "terminal": cmd_terminal, "verify": cmd_verify,
            "mpc-sim": cmd_sim, "doa": cmd_doa, "lp-dims": cmd_dims}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](_Session(cfg, args), out, args)
    except (Infeasible, SynthesisError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    except (LpvTubeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
