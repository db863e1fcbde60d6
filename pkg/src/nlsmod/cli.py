"""Command-line front end: solve, evolve, verify and sample from a YAML run config."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import SCHEMA_VERSION, ConfigError, RunConfig, load_config
from .evolution import EvolutionError, EvolveOptions, Sweep, evolve
from .expr import ExprError
from .geometry import BranchpointSet, build_contours
from .modulation import ModulationError, newton_solve
from .quadrature import QuadratureError
from .rhp import (
    RHPError,
    alternate,
    eval_g,
    eval_h,
    eval_K,
    locations,
    near_loop_mask,
    report_json,
    solve_constants,
)
from .scattering import parse_f0
from .verify import CHECK_ORDER, run_checks

log = logging.getLogger("nlsmod")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_DEGENERATE = 4

SKIP_DISTANCE = 1e-6
SAMPLE_TASK = 64


# --------------------------------------------------------------------------
# deterministic output


def _num(v: float) -> str:
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return format(v, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return dumps([obj.real, obj.imag], indent, _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in seq):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _emit(text: str, path: str | None):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _envelope(command: str, cfg: RunConfig, body: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command, "config": cfg.effective(), **body}


# --------------------------------------------------------------------------
# shared setup


def _scattering(cfg: RunConfig):
    return parse_f0(cfg.f0, cfg.singularities, cfg.schwarz_symmetric)


def _bps(cfg: RunConfig) -> BranchpointSet:
    return BranchpointSet.from_upper(list(cfg.initial_alphas))


def _newton(cfg: RunConfig, sd, x=None, t=None):
    return newton_solve(
        _bps(cfg),
        sd,
        cfg.x if x is None else x,
        cfg.t if t is None else t,
        cfg.newton_tol,
        cfg.newton_max_iter,
        cfg.quad,
        cfg.margin,
        custom_arcs=cfg.custom_arcs,
    )


def _projected(cfg: RunConfig, sd) -> BranchpointSet:
    rep = _newton(cfg, sd)
    if not rep.converged:
        raise ModulationError(f"projection did not converge ({rep.status}, residual {rep.residual:.3g})")
    return rep.final_alphas


def _pool_map(func, tasks, jobs: int):
    """Ordered map; a process pool when jobs > 1."""
    if jobs <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(func, tasks))


# --------------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig, out: str | None) -> int:
    sd = _scattering(cfg)
    rep = _newton(cfg, sd)
    body = {"report": rep.to_json()}
    if rep.solution is not None:
        body["solution"] = report_json(rep.solution)
    _emit(dumps(_envelope("solve", cfg, body)) + "\n", out)
    if not rep.converged:
        log.error("Newton did not converge: %s (residual %.3g)", rep.status, rep.residual)
        return EXIT_NO_CONVERGENCE
    log.info("converged in %d iterations, residual %.3g", rep.iterations, rep.residual)
    return EXIT_OK


def cmd_evolve(cfg: RunConfig, out: str | None) -> int:
    if cfg.sweep is None:
        raise ConfigError("evolve needs a 'sweep' section")
    sd = _scattering(cfg)
    sw = cfg.sweep
    fixed = cfg.t if sw.axis == "x" else cfg.x
    opts = EvolveOptions(
        newton_tol=cfg.newton_tol,
        newton_max_iter=cfg.newton_max_iter,
        quad=cfg.quad,
        margin=cfg.margin,
        custom_arcs=cfg.custom_arcs,
    )
    try:
        traj = evolve(_bps(cfg), sd, Sweep(sw.axis, sw.start, sw.stop, sw.step), fixed, opts)
    except EvolutionError as exc:
        log.error("%s", exc)
        return EXIT_NO_CONVERGENCE
    if cfg.output_format == "csv":
        text = traj.to_csv()
        if traj.truncated:
            text += f"# truncated: {traj.reason}\n"
    else:
        text = dumps(_envelope("evolve", cfg, {"trajectory": traj.to_json()})) + "\n"
    _emit(text, out)
    if traj.truncated:
        log.warning("sweep truncated: %s", traj.reason)
        return EXIT_DEGENERATE
    return EXIT_OK


def _verify_task(args):
    cfg, upper, name = args
    sd = _scattering(cfg)
    rep = run_checks(
        BranchpointSet.from_upper(upper),
        sd,
        cfg.x,
        cfg.t,
        cfg.quad,
        cfg.margin,
        cfg.custom_arcs,
        newton_tol=cfg.newton_tol,
        detune=cfg.detune,
        only=None if name is None else (name,),
    )
    return rep


def cmd_verify(cfg: RunConfig, out: str | None, jobs: int = 1, project: bool = False) -> int:
    sd = _scattering(cfg)
    bps = _projected(cfg, sd) if project else _bps(cfg)
    upper = list(bps.upper)
    t0 = time.perf_counter()
    if jobs > 1:
        reps = _pool_map(_verify_task, [(cfg, upper, name) for name in CHECK_ORDER], jobs)
        checks = [c for r in reps for c in r.checks]
        solution = reps[0].solution
    else:
        rep = _verify_task((cfg, upper, None))
        checks, solution = rep.checks, rep.solution
    passed = all(c.status != "fail" for c in checks)
    body = {
        "passed": passed,
        "alphas": [[a.real, a.imag] for a in upper],
        "solution": solution,
        "checks": [c.to_json() for c in checks],
    }
    _emit(dumps(_envelope("verify", cfg, body)) + "\n", out)
    log.info("verification finished in %.1f s", time.perf_counter() - t0)
    for c in checks:
        log.info("%-20s %-7s %s", c.name, c.status, "" if c.value is None else f"{c.value:.3g}")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


SAMPLE_COLUMNS = ["re_z", "im_z", "re_g", "im_g", "re_h", "im_h", "re_K", "im_K", "location", "skipped"]


def _sample_task(args):
    cfg, upper, zs = args
    sd = _scattering(cfg)
    bps = BranchpointSet.from_upper(upper)
    cs = build_contours(bps, cfg.margin, cfg.custom_arcs, sd.singularities)
    sol = solve_constants(bps, cs, sd, cfg.x, cfg.t, cfg.quad, cfg.margin)
    # only the arcs are genuine contours; loops are moved out of the way instead
    arcs = [p for a in cs.main_arcs for p in a] + [p for a in cs.comp_arcs for p in a]
    spacing = 0.05 * cs.margin
    dense = np.concatenate([np.asarray(p.polyline(1.0 / spacing)) for p in arcs])
    keep = []
    for i, z in enumerate(zs):
        tol = SKIP_DISTANCE * max(1.0, abs(z))
        if np.min(np.abs(dense - z)) <= spacing + tol and min(p.distance(z) for p in arcs) <= tol:
            continue
        if np.min(np.abs(np.array(bps.all) - z)) <= tol:
            continue
        keep.append(i)
    rows = [[z.real, z.imag] + [math.nan] * 6 + ["contour", 1] for z in zs]
    if not keep:
        return rows
    pts = np.array([zs[i] for i in keep], dtype=complex)
    near = near_loop_mask(sol, pts)
    groups = [(sol, ~near)]
    if near.any():
        groups.append((alternate(sol, pts[near]), near))
    for s_, mask in groups:
        sub = pts[mask]
        locs = locations(s_, sub)
        g = np.asarray(eval_g(s_, sub, locs))
        h = np.asarray(eval_h(s_, sub, locs))
        K = np.asarray(eval_K(s_, sub))
        for n, i in enumerate(np.array(keep)[mask]):
            z = zs[i]
            rows[i] = [z.real, z.imag, g[n].real, g[n].imag, h[n].real, h[n].imag, K[n].real, K[n].imag, locs[n].label(), 0]
    return rows


def sample_grid(cfg: RunConfig) -> list:
    (r0, r1, nr), (i0, i1, ni) = cfg.grid.re, cfg.grid.im
    return [complex(a, b) for b in np.linspace(i0, i1, ni) for a in np.linspace(r0, r1, nr)]


def cmd_sample(cfg: RunConfig, out: str | None, jobs: int = 1, project: bool = False) -> int:
    if cfg.grid is None:
        raise ConfigError("sample needs a 'grid' section")
    sd = _scattering(cfg)
    bps = _projected(cfg, sd) if project else _bps(cfg)
    zs = sample_grid(cfg)
    # fixed task size: panel refinement is shared within a task, so the split must not depend on --jobs
    chunks = [zs[i : i + SAMPLE_TASK] for i in range(0, len(zs), SAMPLE_TASK)]
    parts = _pool_map(_sample_task, [(cfg, list(bps.upper), [complex(z) for z in c]) for c in chunks], jobs)
    rows = [r for part in parts for r in part]
    if cfg.output_format == "json":
        body = {"columns": SAMPLE_COLUMNS, "rows": [[_json_cell(v) for v in r] for r in rows]}
        text = dumps(_envelope("sample", cfg, body)) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SAMPLE_COLUMNS)
        for r in rows:
            w.writerow([_num(v) if isinstance(v, float) else v for v in r])
        text = buf.getvalue()
    _emit(text, out)
    skipped = sum(r[-1] for r in rows)
    log.info("sampled %d points, %d skipped", len(rows), skipped)
    return EXIT_OK


def _json_cell(v):
    return None if isinstance(v, float) and math.isnan(v) else v


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="YAML run configuration")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes for grid and check tasks")
    common.add_argument("--out", metavar="PATH", help="output file (overrides output.path; '-' for stdout)")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    p = argparse.ArgumentParser(prog="nlsmod", description="g-function and modulation-equation engine for focusing NLS")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="Newton solve of the modulation equations at (x, t)")
    sub.add_parser("evolve", parents=[common], help="sweep branchpoints in x or t")
    for name, text in (("verify", "run the identity checks"), ("sample", "tabulate g, h and K on a grid")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("--project", action="store_true", help="Newton-project the initial branchpoints first")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        log.error("--jobs must be at least 1")
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        out = args.out if args.out is not None else cfg.output_path
        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "evolve":
            return cmd_evolve(cfg, out)
        if args.command == "verify":
            return cmd_verify(cfg, out, args.jobs, args.project)
        return cmd_sample(cfg, out, args.jobs, args.project)
    except (ConfigError, ExprError, OSError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, ArithmeticError, QuadratureError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NO_CONVERGENCE
    except ValueError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG
    except (ModulationError, RHPError, EvolutionError) as exc:
        log.error("%s", exc)
        return EXIT_NO_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
