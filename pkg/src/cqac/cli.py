"""Command-line front end.

Usage::

    cqac run config.yaml [-o OUTDIR] [-v]
    cqac defaults cov-continue          # print a fully populated config

Exit status: 0 success, 2 configuration error, 3 numerical failure (partial
artifacts are still written).
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import math
import sys
import warnings
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml
from threadpoolctl import threadpool_limits

from . import io
from .analysis import CovBounds, fit_scaling
from .config import ConfigError, RUN_KINDS, RunConfig, load_config, parse_config
from .detcont import BRANCH_POINT, Branch, bifurcation_summary, sample_branch
from .errors import CqacError, DivergenceError, StallError
from .grid import Grid2D, assemble_laplacian, build_grid, jacobian
from .lyapunov import CovarianceBranch, continue_covariance, solve_lyapunov
from .mc import containment_check, euler_maruyama_ensemble
from .noise import assemble_B
from .workflows import compute_branches, critical_kind, critical_mu, linspace_samples, resolve_samples

__all__ = ["main", "run", "build_parser"]

log = logging.getLogger("cqac")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

# output metadata: choices not fixed by the reference setup
CHOICE_NOTES = {
    "mc.dt": "explicit-scheme margin; the reference runs give no time step",
    "mc.transient_fraction": "discard t < fraction * T; reference runs discard transients qualitatively",
    "mc.paths": "path count chosen by the user; not given in the reference runs",
}


def _grid(cfg: RunConfig) -> Grid2D:
    g = cfg.grid
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        grid = build_grid(g.Lx, g.Ly, g.M, g.N)
    for w in caught:
        log.warning("%s", w.message)
    return grid


def _branches(cfg: RunConfig, grid: Grid2D, labels) -> dict[str, Branch]:
    c = cfg.continuation
    return compute_branches(grid, c.settings, labels, c.mu_start)


def _default_samples(cfg: RunConfig, branch: Branch, mu_c: float | None) -> list[float] | None:
    if mu_c is None:
        return None
    if critical_kind(branch.label) == BRANCH_POINT:
        if cfg.run == "fit-scaling":
            return linspace_samples(1.0, mu_c - 0.02, 9)
        vals = linspace_samples(0.0, 1.0, 9) + linspace_samples(1.0, mu_c - 0.02, 9)[1:]
        return [v for v in vals if v < mu_c]
    offsets = [0.1 * 2.0**-k for k in range(8, -1, -1)]
    return [mu_c + d for d in offsets]


def _sampled_branch(cfg: RunConfig, grid: Grid2D) -> tuple[Branch, float | None]:
    label = cfg.continuation.branch
    branch = _branches(cfg, grid, [label])[label]
    try:
        mu_c = critical_mu(branch)
    except ValueError:
        mu_c = None
    sc = cfg.continuation.samples
    if sc is not None:
        mus = resolve_samples(sc.mu, mu_c, sc.relative)
    else:
        mus = _default_samples(cfg, branch, mu_c)
    if mus is None:
        pts = [p for p in branch.stable_points() if p.kind == "regular"]
        return Branch(points=pts, grid=grid, label=f"{label}-stable", settings=branch.settings), mu_c
    return sample_branch(branch, mus, stable_only=True, label=f"{label}-sampled"), mu_c


def _branch_rows(branch: Branch):
    g = branch.grid
    for i, p in enumerate(branch.points):
        yield (i, p.mu, g.l2_norm(p.state), float(np.max(np.abs(p.state), initial=0.0)), p.min_stability_eig, p.stable, p.kind)


def _cov_rows(cb: CovarianceBranch):
    for s in cb.solutions:
        n = s.norms
        yield (
            s.index,
            s.mu,
            n.max_norm,
            n.diag_l1,
            n.diag_l2,
            n.diag_linf,
            s.iterations,
            s.residual,
            s.wall_time_s,
            s.warm_started,
        )


def _write_branch(out: Path, branch: Branch, resolved: dict) -> None:
    io.write_csv(out / f"branch_{branch.label}.csv", io.BRANCH_COLUMNS, _branch_rows(branch), resolved)
    states = np.array([p.state for p in branch.points]) if branch.points else np.zeros((0, branch.grid.J))
    io.write_npz(
        out / f"branch_{branch.label}_states.npz",
        resolved,
        index=np.arange(len(branch.points)),
        mu=np.array([p.mu for p in branch.points]),
        states=states,
    )


def _cov_notes(cb: CovarianceBranch, tol: float) -> dict:
    return {
        "skipped": [{"index": i, "mu": mu, "reason": r} for i, mu, r in cb.skipped],
        "unconverged": [s.index for s in cb.solutions if not s.converged],
        "tolerance": tol,
    }


def _write_cov(out: Path, stem: str, cb: CovarianceBranch, cfg: RunConfig, grid: Grid2D, resolved: dict) -> None:
    io.write_csv(out / f"{stem}.csv", io.COV_COLUMNS, _cov_rows(cb), resolved, _cov_notes(cb, cfg.solver.linear.tol))
    if cfg.dump_diag:
        X, Y = grid.coordinates()
        for s in cb.solutions:
            rows = zip(X, Y, s.diag)
            io.write_csv(out / f"{stem}_diag_{s.index:03d}.csv", io.DIAG_COLUMNS, rows, resolved, {"mu": s.mu})


def run_det_continue(cfg: RunConfig, out: Path, resolved: dict) -> int:
    grid = _grid(cfg)
    try:
        branches = _branches(cfg, grid, cfg.continuation.branches)
    except StallError as exc:
        log.error("continuation stalled: %s", exc)
        if exc.branch is not None:
            _write_branch(out, exc.branch, resolved)
        return EXIT_NUMERICAL
    for br in branches.values():
        _write_branch(out, br, resolved)
    summary = bifurcation_summary(list(branches.values()), mu_end=cfg.continuation.settings.mu_max)
    io.write_json(out / "bifurcation_summary.json", summary, resolved)
    return EXIT_OK


def run_cov_continue(cfg: RunConfig, out: Path, resolved: dict) -> int:
    grid = _grid(cfg)
    sampled, _ = _sampled_branch(cfg, grid)
    label = cfg.continuation.branch
    for nc in cfg.noise:
        cb = continue_covariance(sampled, nc.spec(), cfg.solver.linear, warm=cfg.solver.warm_start)
        _write_cov(out, f"cov_{label}_{nc.tag}", cb, cfg, grid, resolved)
    return EXIT_OK


def run_fit_scaling(cfg: RunConfig, out: Path, resolved: dict) -> int:
    grid = _grid(cfg)
    sampled, mu_c = _sampled_branch(cfg, grid)
    label = cfg.continuation.branch
    mu_c = cfg.fit.mu_crit if cfg.fit.mu_crit is not None else mu_c
    if mu_c is None:
        raise ConfigError("fit.mu_crit", f"{label} has no critical point in range; give mu_crit")
    nc = cfg.noise[0]
    cb = continue_covariance(sampled, nc.spec(), cfg.solver.linear, warm=cfg.solver.warm_start)
    _write_cov(out, f"cov_{label}_{nc.tag}", cb, cfg, grid, resolved)
    pts = [(s.mu, s.norms[cfg.fit.norm]) for s in cb.solutions if s.converged]
    try:
        fit = fit_scaling(pts, mu_c, cfg.fit.window, cfg.fit.exclude_closest)
    except ValueError as exc:
        log.error("scaling fit failed: %s", exc)
        return EXIT_NUMERICAL
    payload = {k: fit.as_dict()[k] for k in ("mu_crit", "alpha", "kappa", "window", "r_squared", "n_points")}
    io.write_json(out / f"scaling_fit_{label}.json", payload, resolved, {"norm": cfg.fit.norm})
    return EXIT_OK


def run_solver_bench(cfg: RunConfig, out: Path, resolved: dict) -> int:
    grid = _grid(cfg)
    sampled, _ = _sampled_branch(cfg, grid)
    label = cfg.continuation.branch
    nc = cfg.noise[0]
    results = []
    for lin in cfg.solver.bench_configs():
        log.info("benchmarking %s", lin.solver_id)
        results.append(continue_covariance(sampled, nc.spec(), lin, warm=cfg.solver.warm_start))
    rows = []
    for i in range(len(sampled.points)):
        for cb in results:
            for s in cb.solutions:
                if s.index == i:
                    rows.append((s.index, s.mu, s.solver_id, s.iterations, s.residual, s.wall_time_s, s.converged))
    io.write_csv(out / f"solver_bench_{label}_{nc.tag}.csv", io.BENCH_COLUMNS, rows, resolved)
    return EXIT_OK


def run_mc_validate(cfg: RunConfig, out: Path, resolved: dict) -> int:
    grid = _grid(cfg)
    label = cfg.continuation.branch
    mc = cfg.mc
    branch = _branches(cfg, grid, [label])[label]
    p_star = sample_branch(branch, [mc.mu], stable_only=True).points[0]
    nc = cfg.noise[0]
    spec = nc.spec()
    A = jacobian(p_star.state, mc.mu, assemble_laplacian(grid))
    B = assemble_B(p_star.state, spec, grid).B
    sol = solve_lyapunov(A, B, cfg.solver.linear, mu=mc.mu)
    V = sol.V
    bounds = CovBounds(c_max=float(V.max()), c_min=float(V.min()))
    probe = grid.center_index() if mc.probe is None else mc.probe
    cut = mc.transient_fraction * mc.T
    summaries = []
    status = EXIT_OK
    for seed in mc.seeds:
        try:
            paths = euler_maruyama_ensemble(
                p_star.state, mc.mu, spec, mc.dt, mc.T, seed, grid, range(mc.paths), probe=probe, drift=mc.drift
            )
        except DivergenceError as exc:
            log.error("seed %d diverged: %s", seed, exc)
            summaries.append({"seed": seed, "diverged_at": exc.time})
            status = EXIT_NUMERICAL
            continue
        for ps in paths:
            containment_check(ps, bounds, cut)
            rows = zip(ps.t, ps.probe, ps.domain_max, ps.domain_min)
            io.write_csv(out / f"path_seed{seed}_p{ps.path_index}.csv", io.PATH_COLUMNS, rows, resolved, CHOICE_NOTES)
            summaries.append(ps.summary(cut))
    payload = {
        "mu": mc.mu,
        "branch": label,
        "bounds": {"c_min": bounds.c_min, "c_max": bounds.c_max},
        "lyapunov_probe_variance": float(V[probe, probe]),
        "lyapunov_iterations": sol.iterations,
        "paths": summaries,
    }
    io.write_json(out / "mc_summary.json", payload, resolved, CHOICE_NOTES)
    return status


RUNNERS = {
    "det-continue": run_det_continue,
    "cov-continue": run_cov_continue,
    "mc-validate": run_mc_validate,
    "fit-scaling": run_fit_scaling,
    "solver-bench": run_solver_bench,
}


def _single_thread():
    return threadpool_limits(limits=1)


def run(cfg: RunConfig) -> int:
    """Execute ``cfg`` and return the exit status."""
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError("output", f"directory {out} is not writable: {exc}") from None
    resolved = cfg.resolved()
    ctx = _single_thread() if cfg.determinism else contextlib.nullcontext()
    with ctx:
        try:
            return RUNNERS[cfg.run](cfg, out, resolved)
        except ConfigError:
            raise
        except (CqacError, ValueError) as exc:
            log.error("numerical failure: %s", exc)
            return EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cqac", description="Branches and stationary covariances of the 2D cqAC SPDE")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute a YAML run configuration")
    r.add_argument("config", type=Path)
    r.add_argument("-o", "--output", type=Path, default=None, help="override the output directory")
    r.add_argument("-v", "--verbose", action="count", default=0)
    d = sub.add_parser("defaults", help="print the fully resolved default configuration for a run kind")
    d.add_argument("kind", choices=RUN_KINDS)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "defaults":
        cfg = parse_config({"run": args.kind})
        print(yaml.safe_dump(cfg.resolved(), sort_keys=False), end="")
        return EXIT_OK
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        if args.output is not None:
            cfg = replace(cfg, output=args.output)
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
