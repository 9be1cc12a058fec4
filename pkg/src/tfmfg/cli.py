"""Command-line entry point ``tfmfg``.

Every run writes its fields as CSV plus ``manifest.json`` (config echo,
version, wall time, invariant checks, file inventory with SHA-256).  Exit
status: 0 when every hard invariant passes, 1 on solver failure or a failed
invariant, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import sys
import time
import traceback
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .errors import ConfigError, TfmfgError
from .fp_solver import memory_field, solve_classical_fp, solve_fractional_fp
from .hjb_solver import classical_hjb_solve, solve_fractional_hjb
from .io import file_inventory, write_ensemble_csv, write_field_csv, write_json
from .mfg_coupler import coupling_eval, initial_density, picard_solve
from .subdiffusion_mc import density_sampler, empirical_density, simulate_time_changed_sde
from .variational import duality_gap, perturbation_verification, weak_duality_probe

SUBCOMMANDS = (
    "solve-fp", "solve-hjb", "solve-mfg", "simulate-ctrw",
    "check-duality", "verify-optimality", "reduce-beta1", "convergence-study",
)


class Run:
    """Collects output files, invariant checks and diagnostics for one command."""

    def __init__(self, out: Path, cfg, threads: int):
        self.out = out
        self.cfg = cfg
        self.threads = threads
        self.files: list[Path] = []
        self.checks: list[dict] = []
        self.diagnostics: dict = {}

    def check(self, name: str, value, passed: bool, bound=None):
        self.checks.append({"name": name, "value": value, "bound": bound, "passed": bool(passed)})

    def field(self, name: str, times, values):
        self.files.append(write_field_csv(self.out / name, times, values))

    def json(self, name: str, obj):
        self.files.append(write_json(self.out / name, obj))

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)


def _density_checks(run: Run, m, beta, label=""):
    mem = memory_field(m, beta)
    mass = float(np.max(np.abs(m.mass - 1.0)))
    run.check(f"{label}mass_conservation", mass, mass <= 1e-10, 1e-10)
    run.check(f"{label}density_positivity", m.minimum, m.minimum >= -1e-10, -1e-10)
    run.check(f"{label}memory_positivity", mem.minimum, mem.minimum >= -1e-10, -1e-10)
    return mem


def _write_mfg(run: Run, sol, beta):
    tg, sg = sol.m.tgrid, sol.m.sgrid
    run.field("m.csv", tg.nodes, sol.m.values)
    run.field("u.csv", tg.nodes, sol.u.values)
    for a in range(sg.dim):
        run.field(f"w_{a}.csv", tg.nodes[1:], sol.w[:, a])
    run.check("picard_converged", sol.residual_history[-1], sol.converged, run.cfg.tol)
    run.check("invariants_every_iterate", sum(not i["passed"] for i in sol.invariants),
              all(i["passed"] for i in sol.invariants), 0)
    cross = sol.cross_residuals["fp_defect_sup_l1"]
    run.check("cross_substitution_residual", cross, cross <= 10 * run.cfg.tol, 10 * run.cfg.tol)
    _density_checks(run, sol.m, beta)
    run.diagnostics["picard"] = {
        "iterations": sol.iterations,
        "residual_history": sol.residual_history,
        "converged": sol.converged,
        "invariants": sol.invariants,
    }


def _solve_mfg(run: Run, refine: int = 1):
    cfg = run.cfg
    problem = cfgmod.problem(cfg, refine)
    sol = picard_solve(problem, cfg.damping, cfg.tol, cfg.max_iter)
    return problem, sol


def cmd_solve_fp(run: Run):
    cfg = run.cfg
    tg, sg = cfgmod.grids(cfg)
    m = solve_fractional_fp(cfgmod.initial_density(cfg, sg), cfgmod.drift_field(cfg, sg), cfg.beta, tg, sg)
    mem = _density_checks(run, m, cfg.beta)
    run.field("density.csv", tg.nodes, m.values)
    run.field("memory.csv", mem.times, mem.values)
    run.diagnostics["fp"] = m.diagnostics


def cmd_solve_hjb(run: Run):
    cfg = run.cfg
    problem = cfgmod.problem(cfg)
    frozen = initial_density(problem, "m0")
    g = coupling_eval(problem.coupling, frozen)
    u = solve_fractional_hjb(problem.u_T, g, cfg.beta, problem.tgrid, problem.sgrid)
    run.field("u.csv", problem.tgrid.nodes, u.values)
    run.check("terminal_exact", 0, bool(np.array_equal(u.values[-1], problem.u_T)))
    run.check("finite", 0, bool(np.all(np.isfinite(u.values))))
    if cfg.coupling == "zero":
        lo, hi = problem.u_T.min(), problem.u_T.max()
        slack = float(max(lo - u.values.min(), u.values.max() - hi, 0.0))
        run.check("comparison_bounds", slack, slack <= 1e-12, 1e-12)
    run.diagnostics["hjb"] = u.diagnostics


def cmd_solve_mfg(run: Run):
    _, sol = _solve_mfg(run)
    _write_mfg(run, sol, run.cfg.beta)


def cmd_simulate_ctrw(run: Run):
    cfg = run.cfg
    tg, sg = cfgmod.grids(cfg)
    m0 = cfgmod.initial_density(cfg, sg)
    every = cfg.record_every or max(1, tg.n_steps // 8)
    record = np.unique(np.r_[np.arange(0, tg.n_steps + 1, every), tg.n_steps])
    ens = simulate_time_changed_sde(cfgmod.drift_function(cfg), cfg.beta, density_sampler(m0, sg),
                                    cfg.particles, tg, seed=cfg.seed, record=record, threads=run.threads)
    hist = np.stack([empirical_density(ens, int(n), sg) for n in record])
    run.field("ctrw_density.csv", tg.nodes[record], hist)
    if cfg.export_particles:
        run.files.append(write_ensemble_csv(run.out / "particles.csv", ens))
    inside = bool(np.all((ens.positions >= 0.0) & (ens.positions < 1.0)))
    run.check("torus_closure", 0, inside)
    mono = bool(np.all(np.diff(ens.internal_times, axis=0) >= 0.0))
    run.check("inverse_clock_monotone", 0, mono)
    pde = solve_fractional_fp(m0, cfgmod.drift_field(cfg, sg), cfg.beta, tg, sg)
    l1 = float(sg.integrate(np.abs(hist[-1] - pde.values[-1])))
    run.diagnostics["ctrw"] = {"l1_vs_pde_at_T": l1, "particles": cfg.particles, "delta": ens.meta["delta"]}


def cmd_check_duality(run: Run):
    problem, sol = _solve_mfg(run)
    _write_mfg(run, sol, run.cfg.beta)
    rep = duality_gap(sol, problem)
    weak = weak_duality_probe(sol, problem, n_draws=run.cfg.samples, seed=run.cfg.seed)
    run.check("gap_ratio", rep.gap_ratio, rep.gap_ratio <= 0.05, 0.05)
    run.check("weak_duality", weak["min"], weak["min"] >= -0.01, -0.01)
    run.json("duality.json", {"report": rep.__dict__, "weak_duality": weak})


def cmd_verify_optimality(run: Run):
    problem, sol = _solve_mfg(run)
    _write_mfg(run, sol, run.cfg.beta)
    rep = perturbation_verification(sol, problem, n_samples=run.cfg.samples, seed=run.cfg.seed)
    run.check("min_margin_A", rep.min_margin_A, rep.min_margin_A >= -rep.tol, -rep.tol)
    run.check("margins_grow_with_h", 0, rep.margins_grow)
    run.check("min_margin_B", rep.min_margin_B, rep.min_margin_B >= -rep.tol, -rep.tol)
    run.json("perturbation.json", rep.__dict__)


def cmd_reduce_beta1(run: Run):
    cfg = run.cfg
    tg, sg = cfgmod.grids(cfg)
    m0 = cfgmod.initial_density(cfg, sg)
    v = cfgmod.drift_field(cfg, sg)
    problem = cfgmod.problem(cfg)
    g = coupling_eval(problem.coupling, initial_density(problem, "m0"))
    classical_m = solve_classical_fp(m0, v, tg, sg)
    classical_u = classical_hjb_solve(problem.u_T, g, tg, sg)
    rows = []
    for beta in (0.999, 1.0):
        m = solve_fractional_fp(m0, v, beta, tg, sg)
        u = solve_fractional_hjb(problem.u_T, g, beta, tg, sg)
        dm = float(np.max(np.abs(m.values - classical_m.values)))
        du = float(np.max(np.abs(u.values - classical_u.values)))
        bound = 2e-2 if beta < 1 else 1e-12
        rows += [("fp", beta, dm, bound), ("hjb", beta, du, bound)]
        run.check(f"fp_beta_{beta:g}_vs_classical", dm, dm <= bound, bound)
        run.check(f"hjb_beta_{beta:g}_vs_classical", du, du <= bound, bound)
        tag = f"{beta:g}".replace(".", "p")
        run.field(f"density_beta_{tag}.csv", tg.nodes, m.values)
        run.field(f"value_beta_{tag}.csv", tg.nodes, u.values)
    run.field("density_classical.csv", tg.nodes, classical_m.values)
    run.field("value_classical.csv", tg.nodes, classical_u.values)
    path = run.out / "comparison.csv"
    with open(path, "w") as fh:
        fh.write("solver,beta,sup_diff,bound\n")
        for name, beta, diff, bound in rows:
            fh.write(f"{name},{beta:.17g},{diff:.17g},{bound:.17g}\n")
    run.files.append(path)


def cmd_convergence_study(run: Run):
    rows = []
    for level in range(run.cfg.levels):
        problem, sol = _solve_mfg(run, refine=2**level)
        rep = duality_gap(sol, problem)
        rows.append((problem.sgrid.n_cells, problem.tgrid.n_steps, rep.value_A, rep.value_B, rep.gap, rep.gap_ratio))
    ratios = [r[-1] for r in rows]
    run.check("gap_ratio_strictly_decreasing", ratios, all(b < a for a, b in zip(ratios, ratios[1:])))
    run.check("gap_ratio_finest", ratios[-1], ratios[-1] <= 0.05, 0.05)
    path = run.out / "convergence.csv"
    with open(path, "w") as fh:
        fh.write("N_x,N_t,A,B,gap,gap_ratio\n")
        for r in rows:
            fh.write(",".join([str(r[0]), str(r[1])] + [f"{x:.17g}" for x in r[2:]]) + "\n")
    run.files.append(path)


COMMANDS = {
    "solve-fp": cmd_solve_fp,
    "solve-hjb": cmd_solve_hjb,
    "solve-mfg": cmd_solve_mfg,
    "simulate-ctrw": cmd_simulate_ctrw,
    "check-duality": cmd_check_duality,
    "verify-optimality": cmd_verify_optimality,
    "reduce-beta1": cmd_reduce_beta1,
    "convergence-study": cmd_convergence_study,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tfmfg", description="Time-fractional mean field game solvers.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=COMMANDS[name].__name__.replace("cmd_", "").replace("_", " "))
        p.add_argument("--config", type=Path, help="flat YAML run configuration")
        p.add_argument("--out", type=Path, help="output directory (overrides config 'out')")
        p.add_argument("--seed", type=int, help="random seed (overrides config 'seed')")
        p.add_argument("--threads", type=int, default=1, help="worker threads for Monte Carlo")
        p.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load_config(args.config) if args.config else cfgmod.RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        cfgmod.validate(cfg)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = args.out if args.out is not None else Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    run = Run(out, cfg, args.threads)
    start = time.perf_counter()
    error = None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            COMMANDS[args.command](run)
        except (TfmfgError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            error = {"type": type(exc).__name__, "message": str(exc), "traceback": traceback.format_exc()}
    if error and error["type"] == "ConfigError":
        status = 2
    else:
        status = 1 if error or not run.passed else 0
    manifest = {
        "command": args.command,
        "config": cfg.to_dict(),
        "threads": args.threads,
        "version": __version__,
        "wall_time_s": time.perf_counter() - start,
        "status": status,
        "error": error,
        "warnings": [str(w.message) for w in caught],
        "invariants": run.checks,
        "diagnostics": run.diagnostics,
        "files": file_inventory(run.files),
    }
    write_json(out / "manifest.json", manifest)
    if not args.quiet:
        for c in run.checks:
            print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: {c['value']}")
        if error:
            print(f"error: {error['type']}: {error['message']}", file=sys.stderr)
        print(f"{args.command}: {'ok' if status == 0 else 'failed'} -> {out / 'manifest.json'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
