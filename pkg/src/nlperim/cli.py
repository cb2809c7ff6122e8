"""Command-line front end.

Subcommands: ``energy``, ``minimize``, ``calibrate``, ``gamma`` (each driven
by a config file), and ``selftest`` (self-contained). Every run writes its
artifacts plus a ``manifest.json`` (config hash, tool version, wall time)
into the output directory. Exit codes: 0 success, 1 validation error,
2 numerical failure. CSV columns are frozen; see FORMATS.md.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import certificate
from .config import ExperimentConfig, load_config, parse_calibration, parse_facets, parse_source
from .energy import energy
from .errors import NumericalError, ValidationError
from .gamma import gamma_sweep
from .grid import indicator_halfspace, random_admissible, save_field_csv
from .selftest import run_selftest
from .solve import SolveOptions, minimize


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _write_manifest(outdir: Path, args, cfg_text: str, task: str, wall: float) -> None:
    manifest = {
        "tool": "nlperim",
        "version": __version__,
        "task": task,
        "config_sha256": hashlib.sha256(cfg_text.encode()).hexdigest(),
        "overrides": list(getattr(args, "set", []) or []),
        "deterministic": bool(getattr(args, "deterministic", False)),
        "threads": int(getattr(args, "threads", 0)),
        "wall_time_s": wall,
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _apply_threads(n: int) -> None:
    if n and n > 0:
        import numba

        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def _prepare(args) -> ExperimentConfig:
    cfg = load_config(args.config, overrides=args.set)
    if args.out:
        object.__setattr__(cfg, "outdir", Path(args.out))
    cfg.outdir.mkdir(parents=True, exist_ok=True)
    return cfg


def _task_field(cfg: ExperimentConfig, key: str, datum=None, required: bool = True):
    spec = cfg.task_params.get(key)
    if spec is None:
        if required:
            raise ValidationError(f"[task] section requires '{key}' for task {cfg.task!r}")
        return None
    return parse_source(spec, cfg.grid, datum=datum, base_dir=cfg.outdir.parent)


def _cmd_energy(args) -> int:
    t0 = time.perf_counter()
    cfg = _prepare(args)
    datum_spec = cfg.task_params.get("datum")
    datum = parse_source(datum_spec, cfg.grid, base_dir=cfg.outdir.parent) if datum_spec else None
    u = _task_field(cfg, "field", datum=datum)
    br = energy(u, cfg.domain, cfg.kernel)
    _write_csv(cfg.outdir / "energy.csv",
               ["interior_term", "cross_term", "tail_bound", "total"],
               [[br.interior_term, br.cross_term, br.tail_bound, br.total]])
    summary = (
        f"energy total = {br.total:.12g}\n"
        f"  interior term = {br.interior_term:.12g}\n"
        f"  cross term    = {br.cross_term:.12g}\n"
        f"  tail bound    = {br.tail_bound:.3g}\n"
    )
    (cfg.outdir / "summary.txt").write_text(summary)
    print(summary, end="")
    _write_manifest(cfg.outdir, args, cfg.raw_text, "energy", time.perf_counter() - t0)
    return 0


def _cmd_minimize(args) -> int:
    t0 = time.perf_counter()
    cfg = _prepare(args)
    datum = _task_field(cfg, "datum")
    p = cfg.task_params
    opts_kwargs = {}
    if "deltas" in p:
        opts_kwargs["deltas"] = tuple(float(v) for v in p["deltas"].split())
    for key, conv in (("max_iters", int), ("stop_tol", float), ("stage_stop_tol", float),
                      ("seed", int), ("step_scale", float), ("step_decay", float)):
        if key in p:
            opts_kwargs[key] = conv(p[key])
    for key in ("accelerated", "multilevel"):
        if key in p:
            opts_kwargs[key] = p[key].strip().lower() in ("1", "true", "yes", "on")
    opts = SolveOptions(**opts_kwargs)

    reference = None
    reference_normal = None
    if args.reference:
        reference = parse_source(args.reference, cfg.grid, base_dir=cfg.outdir.parent)
        if args.reference.startswith("halfspace:"):
            reference_normal = [float(v) for v in args.reference.split(":")[1].replace(",", " ").split()]
    elif "reference" in p:
        reference = parse_source(p["reference"], cfg.grid, base_dir=cfg.outdir.parent)
        if p["reference"].startswith("halfspace:"):
            reference_normal = [float(v) for v in p["reference"].split(":")[1].replace(",", " ").split()]

    initial = _task_field(cfg, "initial", datum=datum, required=False)
    rep = minimize(datum, cfg.domain, cfg.kernel, opts, initial=initial,
                   reference=reference, reference_normal=reference_normal)

    save_field_csv(rep.u_star, cfg.outdir / "field.csv")
    save_field_csv(rep.rounded, cfg.outdir / "rounded.csv")
    _write_csv(cfg.outdir / "trace.csv", ["iteration", "h", "delta", "energy"],
               [list(row) for row in rep.trace])
    row = [rep.energy_final.interior_term, rep.energy_final.cross_term,
           rep.energy_final.tail_bound, rep.energy_final.total, rep.t_star,
           rep.rounded_energy.total, rep.smoothing_gap_bound, rep.iterations]
    header = ["interior_term", "cross_term", "tail_bound", "total", "t_star",
              "rounded_total", "smoothing_gap_bound", "iterations"]
    if rep.monotonicity_defect is not None:
        header.append("monotonicity_defect")
        row.append(rep.monotonicity_defect)
    if rep.l1_to_reference is not None:
        header.append("l1_to_reference")
        row.append(rep.l1_to_reference)
    _write_csv(cfg.outdir / "minimize.csv", header, [row])
    summary = (
        f"minimize: final energy {rep.energy_final.total:.12g} after {rep.iterations} iterations\n"
        f"  rounded at t* = {rep.t_star:.6g}: perimeter {rep.rounded_energy.total:.12g}\n"
        f"  smoothing gap bound {rep.smoothing_gap_bound:.3g}\n"
    )
    if rep.l1_to_reference is not None:
        summary += f"  L1 distance to reference {rep.l1_to_reference:.6g}\n"
    if rep.monotonicity_defect is not None:
        summary += f"  monotonicity defect {rep.monotonicity_defect:.3g}\n"
    (cfg.outdir / "summary.txt").write_text(summary)
    print(summary, end="")
    _write_manifest(cfg.outdir, args, cfg.raw_text, "minimize", time.perf_counter() - t0)
    return 0


def _cmd_calibrate(args) -> int:
    t0 = time.perf_counter()
    cfg = _prepare(args)
    p = cfg.task_params
    zeta = parse_calibration(p.get("calibration", ""))
    candidate = _task_field(cfg, "candidate")
    n_comp = int(p.get("competitors", "0"))
    seed = int(p.get("seed", "0"))

    rows = []
    rep = certificate(zeta, candidate, candidate, cfg.domain, cfg.kernel)
    gap_tol = 1e-6 * abs(rep.b0) + 1e-12
    rows.append(["candidate", rep.a, rep.b1, rep.b0, rep.energy_of_candidate, rep.gap,
                 rep.normal_violation_fraction, "pass" if rep.gap <= gap_tol else "fail"])
    all_ok = rep.gap <= gap_tol
    rng = np.random.default_rng(seed)
    for i in range(n_comp):
        v = random_admissible(cfg.grid, candidate.datum, rng)
        rv = certificate(zeta, candidate, v, cfg.domain, cfg.kernel)
        ok = rv.gap >= -1e-9 * (abs(rv.b0) + 1.0)
        all_ok = all_ok and ok
        rows.append([f"competitor_{i}", rv.a, rv.b1, rv.b0, rv.energy_of_candidate, rv.gap,
                     rv.normal_violation_fraction, "pass" if ok else "fail"])
    _write_csv(cfg.outdir / "certificate.csv",
               ["label", "a", "b1", "b0", "energy", "gap", "normal_violation_fraction", "status"],
               rows)
    _write_csv(cfg.outdir / "divergence.csv", ["x", "radius", "residual"],
               [[",".join(_fmt(c) for c in x), r, res] for (x, r, res) in rep.divergence_residuals])
    verdict = "PASS" if all_ok else "FAIL"
    summary = (
        f"calibration {zeta.name}: candidate gap {rep.gap:.3e} (b0 = {rep.b0:.12g})\n"
        f"  {n_comp} competitors checked, worst gap "
        f"{min((float(r[5]) for r in rows[1:]), default=rep.gap):.3e}\n"
        f"  normal violation fraction {rep.normal_violation_fraction:.3g}\n"
        f"  verdict: {verdict}\n"
    )
    (cfg.outdir / "summary.txt").write_text(summary)
    print(summary, end="")
    _write_manifest(cfg.outdir, args, cfg.raw_text, "calibrate", time.perf_counter() - t0)
    return 0 if all_ok else 2


def _cmd_gamma(args) -> int:
    t0 = time.perf_counter()
    cfg = _prepare(args)
    p = cfg.task_params
    set_spec = p.get("set")
    if set_spec is None:
        raise ValidationError("[task] gamma requires a 'set' source")
    E = parse_source(set_spec, cfg.grid, base_dir=cfg.outdir.parent)
    eps = [float(v) for v in p.get("eps", "").split()]
    if not eps:
        raise ValidationError("[task] gamma requires an 'eps' list")
    facets = parse_facets(p.get("facets", "auto"), cfg.domain, set_spec, cfg.kernel.dimension)
    rep = gamma_sweep(E, facets, cfg.domain, cfg.kernel, eps, set_id=set_spec)
    _write_csv(cfg.outdir / "sweep.csv",
               ["eps", "j1_over_eps", "j2_over_eps", "j_over_eps", "j0_reference", "relative_error"],
               [list(row) for row in rep.rows])
    summary = (
        f"gamma sweep of {rep.set_id} under {rep.kernel_id}: "
        f"fitted error rate {rep.fitted_rate:.4g}\n"
    )
    (cfg.outdir / "summary.txt").write_text(summary)
    print(summary, end="")
    _write_manifest(cfg.outdir, args, cfg.raw_text, "gamma", time.perf_counter() - t0)
    return 0


def _cmd_selftest(args) -> int:
    t0 = time.perf_counter()
    outdir = Path(args.out or "selftest_out")
    outdir.mkdir(parents=True, exist_ok=True)
    checks = run_selftest()
    rows = [[c.name, c.measured, c.expected, c.tolerance, "pass" if c.passed else "fail"]
            for c in checks]
    _write_csv(outdir / "selftest.csv", ["name", "measured", "expected", "tolerance", "status"], rows)
    n_fail = sum(0 if c.passed else 1 for c in checks)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.measured:.12g} "
              f"(expected {c.expected:.12g} +- {c.tolerance:.3g})")
    print(f"selftest: {len(checks) - n_fail}/{len(checks)} checks passed")
    _write_manifest(outdir, args, "selftest", "selftest", time.perf_counter() - t0)
    return 0 if n_fail == 0 else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nlperim",
                                     description="nonlocal perimeter energies on grids")
    parser.add_argument("--version", action="version", version=f"nlperim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        if needs_config:
            sp.add_argument("--config", required=True, help="experiment config file")
            sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                            help="override a config entry")
        sp.add_argument("--out", default=None, help="output directory override")
        sp.add_argument("--threads", type=int, default=0, help="worker threads (0 = auto)")
        sp.add_argument("--deterministic", action="store_true",
                        help="record determinism intent in the manifest (sweeps are "
                             "order-fixed and bitwise reproducible regardless)")

    sp = sub.add_parser("energy", help="evaluate the energy of a field")
    common(sp)
    sp.set_defaults(func=_cmd_energy)

    sp = sub.add_parser("minimize", help="solve the boundary-datum minimization problem")
    common(sp)
    sp.add_argument("--reference", default=None,
                    help="reference field source for the L1 comparison, e.g. halfspace:0,1:0")
    sp.set_defaults(func=_cmd_minimize)

    sp = sub.add_parser("calibrate", help="evaluate a minimality certificate")
    common(sp)
    sp.set_defaults(func=_cmd_calibrate)

    sp = sub.add_parser("gamma", help="sweep the kernel concentration parameter")
    common(sp)
    sp.set_defaults(func=_cmd_gamma)

    sp = sub.add_parser("selftest", help="run the built-in deterministic checks")
    common(sp, needs_config=False)
    sp.set_defaults(func=_cmd_selftest)

    args = parser.parse_args(argv)
    _apply_threads(args.threads)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
