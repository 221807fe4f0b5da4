"""Batch command-line tool: generate, simulate, reconstruct, evaluate.

Subcommands: phantom, mask, simulate, recon, eval, sweep, adapt.  Every
command prints a single-line JSON summary on success and is deterministic
given its flags and seeds (the per-iteration trace CSV's wall-time column
is the one measured quantity).  Exit codes: 0 success, 1 generation or
runtime failure, 2 usage/validation, 3 solver numerical failure.

Settings resolve as: command-line flag, then JSON config file, then
built-in default.  Config files carry ``"version": 1`` and only the keys
listed in the README; unknown keys are rejected up front.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .acquisition import (MASK_KINDS, CoilSet, PhantomSpec, SamplingMask, make_coil_maps,
                          make_mask, make_phantom, simulate_acquisition)
from .errors import DimensionError, FormatError, NumericalFailure, ParameterError
from .io import SweepRow, export_png, load_grid, save_grid, write_report_csv
from .metrics import magnitude, metric_report
from .model import REG_FAMILIES, ForwardModel, Objective, Regularizer
from .solver import (PhaseSchedule, SolverConfig, TaskSpec, adapt, default_config, reconstruct)

_TOP_KEYS = ("version", "phantom", "mask", "solver", "regularizer", "outputs")
_PHANTOM_KEYS = ("size", "coils", "noise_sigma", "seed")
_MASK_KEYS = ("kind", "ratio", "acs", "seed")
_SOLVER_KEYS = ("eta0", "tau0", "sigma", "mu", "delta", "epsilon", "max_iters",
                "alpha", "beta", "gamma", "schedule")
_REG_KEYS = ("family", "lambda_r")
_OUTPUT_KEYS = ("directory",)

# The mask-family / sampling-ratio grid reproduced by the default sweep.
_SWEEP_UNIFORM = (0.6281, 0.5156, 0.3156, 0.3063, 0.2125, 0.0875)
_SWEEP_RANDOM = (0.5031, 0.3188, 0.2344, 0.0938)
_SWEEP_RADIAL = (0.5439, 0.4115, 0.3129, 0.2140, 0.1267, 0.0914, 0.0432)


def default_sweep_grid() -> list[dict]:
    cells = [{"kind": "uniform-cartesian", "ratio": r} for r in _SWEEP_UNIFORM]
    cells += [{"kind": "random-cartesian", "ratio": r} for r in _SWEEP_RANDOM]
    cells += [{"kind": "radial", "ratio": r} for r in _SWEEP_RADIAL]
    return cells


def _check_keys(section: dict, allowed, where: str):
    if not isinstance(section, dict):
        raise FormatError(f"config section {where!r} must be a JSON object")
    unknown = [k for k in section if k not in allowed]
    if unknown:
        raise FormatError(f"unknown key {unknown[0]!r} in config section {where!r}")


def load_experiment_config(path) -> dict:
    """Parse and structurally validate an experiment config file."""
    try:
        with open(path, "rb") as fh:
            doc = json.loads(fh.read().decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise FormatError(f"config {path} must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "top level")
    if "version" in doc and doc["version"] != 1:
        raise FormatError(f"unsupported config version {doc['version']!r}; expected 1")
    if "phantom" in doc:
        _check_keys(doc["phantom"], _PHANTOM_KEYS, "phantom")
    if "mask" in doc:
        masks = doc["mask"] if isinstance(doc["mask"], list) else [doc["mask"]]
        for m in masks:
            _check_keys(m, _MASK_KEYS, "mask")
    if "solver" in doc:
        _check_keys(doc["solver"], _SOLVER_KEYS, "solver")
        if "schedule" in doc["solver"] and any(k in doc["solver"] for k in ("alpha", "beta", "gamma")):
            raise FormatError("config section 'solver' mixes 'schedule' with alpha/beta/gamma")
    if "regularizer" in doc:
        _check_keys(doc["regularizer"], _REG_KEYS, "regularizer")
    if "outputs" in doc:
        _check_keys(doc["outputs"], _OUTPUT_KEYS, "outputs")
    return doc


def _normalize_kind(kind: str) -> str:
    kind = str(kind).lower()
    if kind == "uniform":
        kind = "uniform-cartesian"
    elif kind == "random":
        kind = "random-cartesian"
    if kind not in MASK_KINDS:
        raise ParameterError(f"unknown mask kind {kind!r}; expected one of {MASK_KINDS}")
    return kind


def _pick(flag, section: dict, key: str, default):
    if flag is not None:
        return flag
    if key in section:
        return section[key]
    return default


def resolve_solver_config(section: dict, flags: dict, model: ForwardModel,
                          lambda_r: float) -> SolverConfig:
    """Merge flag > config > model-sized default into a SolverConfig."""
    base = default_config(model, lambda_r)
    scalars = {}
    for key in ("eta0", "tau0", "sigma", "mu", "delta", "epsilon", "max_iters"):
        scalars[key] = _pick(flags.get(key), section, key, getattr(base, key))
    a0, b0, g0 = base.schedule.at(0)
    step_flags = {k: flags.get(k) for k in ("alpha", "beta", "gamma")}
    step_cfg = {k: section.get(k) for k in ("alpha", "beta", "gamma")}
    flagged = any(v is not None for v in step_flags.values())
    any_step = flagged or any(v is not None for v in step_cfg.values())
    if flagged or "schedule" not in section:
        if any_step:
            alpha = _pick(step_flags["alpha"], section, "alpha", a0)
            beta = _pick(step_flags["beta"], section, "beta", b0)
            gamma = _pick(step_flags["gamma"], section, "gamma", alpha)
            schedule = PhaseSchedule.constant(float(alpha), float(beta), float(gamma))
        else:
            schedule = base.schedule
    else:
        schedule = PhaseSchedule.from_dict(section["schedule"])
    return SolverConfig(eta0=float(scalars["eta0"]), tau0=float(scalars["tau0"]),
                        sigma=float(scalars["sigma"]), mu=float(scalars["mu"]),
                        delta=float(scalars["delta"]), epsilon=float(scalars["epsilon"]),
                        max_iters=int(scalars["max_iters"]), schedule=schedule)


def _resolve_reg(section: dict, flags: dict) -> tuple[Regularizer | None, float]:
    family = _pick(flags.get("family"), section, "family", "smoothed-tv")
    lambda_r = float(_pick(flags.get("lambda_r"), section, "lambda_r", 1e-3))
    if lambda_r == 0.0:
        return None, 0.0
    return Regularizer(family=family, weight=lambda_r), lambda_r


def _load_mask(base) -> SamplingMask:
    kept = load_grid(base, kind="mask")
    return SamplingMask(kept=kept > 0.5, kind="unknown")


def _emit(obj: dict):
    print(json.dumps(obj))


def _config_of(args) -> dict:
    if getattr(args, "config", None):
        return load_experiment_config(args.config)
    return {}


def cmd_phantom(args) -> int:
    cfg = _config_of(args).get("phantom", {})
    size = int(_pick(args.size, cfg, "size", 64))
    spec = PhantomSpec(size=size, coils=1, noise_sigma=0.0, seed=0)
    truth = make_phantom(spec)
    save_grid(args.out, truth, "image")
    _emit({"path": args.out, "size": size, "peak": float(np.abs(truth).max())})
    return 0


def cmd_mask(args) -> int:
    cfg = _config_of(args).get("mask", {})
    if isinstance(cfg, list):
        cfg = cfg[0] if cfg else {}
    kind = _normalize_kind(_pick(args.kind, cfg, "kind", "uniform-cartesian"))
    size = int(_pick(args.size, cfg, "size", 64))
    ratio = _pick(args.ratio, cfg, "ratio", None)
    if ratio is None:
        raise ParameterError("a target ratio is required (--ratio or config mask.ratio)")
    acs = _pick(args.acs, cfg, "acs", None)
    seed = int(_pick(args.seed, cfg, "seed", 0))
    mask = make_mask(kind, size, float(ratio), acs_lines=None if acs is None else int(acs),
                     seed=seed)
    save_grid(args.out, mask.kept.astype(np.float64), "mask")
    _emit({"path": args.out, "kind": kind, "target_ratio": float(ratio),
           "measured_ratio": mask.ratio_measured, "acs_lines": mask.acs_lines, "seed": seed})
    return 0


def cmd_simulate(args) -> int:
    cfg = _config_of(args).get("phantom", {})
    truth = load_grid(args.truth, kind="image")
    mask = _load_mask(args.mask)
    noise_sigma = float(_pick(args.noise_sigma, cfg, "noise_sigma", 0.0))
    seed = int(_pick(args.seed, cfg, "seed", 0))
    if args.maps is not None:
        maps = load_grid(args.maps, kind="maps")
        if maps.ndim == 2:
            maps = maps[None]
        coilset = CoilSet(maps=maps)
    else:
        coils = int(_pick(args.coils, cfg, "coils", 1))
        coilset = make_coil_maps(truth.shape[0], coils)
    acq = simulate_acquisition(truth, coilset, mask, noise_sigma=noise_sigma, seed=seed)
    maps_path = f"{args.out}_maps"
    ksp_path = f"{args.out}_kspace"
    save_grid(maps_path, acq.maps, "maps")
    save_grid(ksp_path, acq.kspace, "kspace")
    _emit({"maps": maps_path, "kspace": ksp_path, "coils": acq.coils,
           "noise_sigma": noise_sigma, "seed": seed, "measured_ratio": mask.ratio_measured})
    return 0


def _solver_flags(args) -> dict:
    return {key: getattr(args, key) for key in
            ("eta0", "tau0", "sigma", "mu", "delta", "epsilon", "max_iters",
             "alpha", "beta", "gamma")}


def cmd_recon(args) -> int:
    doc = _config_of(args)
    ksp = load_grid(args.kspace, kind="kspace")
    maps = load_grid(args.maps, kind="maps")
    mask = _load_mask(args.mask)
    if ksp.ndim == 2:
        ksp = ksp[None]
    if maps.ndim == 2:
        maps = maps[None]
    fm = ForwardModel(mask=mask, maps=maps, measurements=ksp)
    reg, lambda_r = _resolve_reg(doc.get("regularizer", {}),
                                 {"family": args.family, "lambda_r": args.lambda_r})
    cfg = resolve_solver_config(doc.get("solver", {}), _solver_flags(args), fm, lambda_r)
    obj = Objective(fm, reg)

    trace_path = args.trace if args.trace else f"{args.out}_trace.csv"
    try:
        x, trace = reconstruct(obj, cfg)
    except NumericalFailure as exc:
        exc.trace.write_csv(trace_path)
        print(f"recon: numerical failure: {exc}", file=sys.stderr)
        return 3
    trace.write_csv(trace_path)
    image_path = f"{args.out}_image"
    save_grid(image_path, x, "image")
    summary = {"image": image_path, "trace": trace_path, "iters": len(trace)}
    if args.ref:
        ref = load_grid(args.ref, kind="image")
        report = metric_report(ref, x)
        report_path = f"{args.out}_report.json"
        with open(report_path, "w") as fh:
            fh.write(report.to_json() + "\n")
        summary["report"] = report_path
        summary.update(report.to_dict())
    _emit(summary)
    return 0


def cmd_eval(args) -> int:
    ref = load_grid(args.ref, kind="image")
    test = load_grid(args.test, kind="image")
    report = metric_report(ref, test)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.to_json() + "\n")
    _emit(report.to_dict())
    return 0


def cmd_sweep(args) -> int:
    doc = _config_of(args)
    ph = doc.get("phantom", {})
    size = int(ph.get("size", 64))
    coils = int(ph.get("coils", 8))
    noise_sigma = float(ph.get("noise_sigma", 0.01))
    seed = int(ph.get("seed", 0))
    out_dir = args.out_dir or doc.get("outputs", {}).get("directory", "sweep")
    os.makedirs(out_dir, exist_ok=True)

    cells = doc.get("mask")
    if cells is None:
        cells = default_sweep_grid()
    elif isinstance(cells, dict):
        cells = [cells]

    spec = PhantomSpec(size=size, coils=coils, noise_sigma=noise_sigma, seed=seed)
    truth = make_phantom(spec)
    coilset = make_coil_maps(size, coils)
    reg, lambda_r = _resolve_reg(doc.get("regularizer", {}), {})

    rows = []
    for cell in cells:
        kind = _normalize_kind(cell.get("kind", "uniform-cartesian"))
        ratio = float(cell["ratio"])
        acs = cell.get("acs")
        cell_seed = int(cell.get("seed", seed))
        measured = float("nan")
        iters = 0
        try:
            mask = make_mask(kind, size, ratio, acs_lines=None if acs is None else int(acs),
                             seed=cell_seed)
            measured = mask.ratio_measured
            acq = simulate_acquisition(truth, coilset, mask, noise_sigma=noise_sigma, seed=seed)
            fm = ForwardModel.from_coilset(acq, mask)
            cfg = resolve_solver_config(doc.get("solver", {}), {}, fm, lambda_r)
            obj = Objective(fm, reg)
            x, trace = reconstruct(obj, cfg)
            report = metric_report(truth, x)
            rows.append(SweepRow(
                mask_kind=kind, target_ratio=ratio, measured_ratio=measured,
                seed=cell_seed, psnr_db=report.psnr_db, rel_err=report.rel_err,
                ssim=report.ssim, iters=len(trace), wall_ms=0.0))
            png = os.path.join(out_dir, f"{kind}_{int(round(ratio * 10000)):05d}.png")
            export_png(png, magnitude(x), window=(0.0, float(magnitude(truth).max())))
        except (NumericalFailure, ParameterError, DimensionError) as exc:
            if isinstance(exc, NumericalFailure):
                iters = len(exc.trace)
            print(f"sweep: cell {kind} @ {ratio}: {exc}", file=sys.stderr)
            rows.append(SweepRow(
                mask_kind=kind, target_ratio=ratio, measured_ratio=measured,
                seed=cell_seed, psnr_db=float("-inf"), rel_err=float("inf"),
                ssim=float("-inf"), iters=iters, wall_ms=0.0))

    results = os.path.join(out_dir, "results.csv")
    write_report_csv(results, rows)
    _emit({"results": results, "cells": len(rows), "out_dir": out_dir})
    return 0


def _candidate_config(entry: dict) -> SolverConfig:
    if not isinstance(entry, dict):
        raise FormatError("each candidate must be a JSON object of solver settings")
    _check_keys(entry, _SOLVER_KEYS, "candidate")
    entry = dict(entry)
    sched = entry.pop("schedule", None)
    alpha = entry.pop("alpha", None)
    beta = entry.pop("beta", None)
    gamma = entry.pop("gamma", None)
    if sched is not None:
        if any(v is not None for v in (alpha, beta, gamma)):
            raise FormatError("candidate mixes 'schedule' with alpha/beta/gamma")
        schedule = PhaseSchedule.from_dict(sched)
    else:
        a = 1.0 if alpha is None else float(alpha)
        b = 1.0 if beta is None else float(beta)
        g = a if gamma is None else float(gamma)
        schedule = PhaseSchedule.constant(a, b, g)
    return SolverConfig(schedule=schedule, **entry)


def _load_tasks(tasks_dir) -> list[TaskSpec]:
    if not os.path.isdir(tasks_dir):
        raise FileNotFoundError(f"task directory {tasks_dir!r} does not exist")
    tasks = []
    for name in sorted(os.listdir(tasks_dir)):
        sub = os.path.join(tasks_dir, name)
        if not os.path.isdir(sub):
            continue
        ref = load_grid(os.path.join(sub, "ref"), kind="image")
        maps = load_grid(os.path.join(sub, "maps"), kind="maps")
        ksp = load_grid(os.path.join(sub, "kspace"), kind="kspace")
        mask = _load_mask(os.path.join(sub, "mask"))
        if maps.ndim == 2:
            maps = maps[None]
        if ksp.ndim == 2:
            ksp = ksp[None]
        tasks.append(TaskSpec(mask=mask, coilset=CoilSet(maps=maps, kspace=ksp), reference=ref))
    if not tasks:
        raise FormatError(f"task directory {tasks_dir!r} contains no task subdirectories")
    return tasks


def cmd_adapt(args) -> int:
    doc = _config_of(args)
    tasks = _load_tasks(args.tasks)
    with open(args.candidates, "rb") as fh:
        try:
            cand_doc = json.loads(fh.read().decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"candidate file {args.candidates} is not valid JSON: {exc}") from None
    if isinstance(cand_doc, dict):
        cand_doc = cand_doc.get("candidates")
    if not isinstance(cand_doc, list) or not cand_doc:
        raise FormatError("candidate file must hold a non-empty JSON list "
                          "(or an object with a 'candidates' list)")
    candidates = [_candidate_config(c) for c in cand_doc]
    reg, _ = _resolve_reg(doc.get("regularizer", {}),
                          {"family": args.family, "lambda_r": args.lambda_r})

    best, table = adapt(tasks, candidates, metric=args.metric, reg=reg)
    os.makedirs(args.out_dir, exist_ok=True)
    best_path = os.path.join(args.out_dir, "best_config.json")
    with open(best_path, "w") as fh:
        fh.write(json.dumps(best.to_dict()) + "\n")
    scores_path = os.path.join(args.out_dir, "scores.csv")
    with open(scores_path, "w", newline="") as fh:
        fh.write("task_index,candidate_index,score,failed\n")
        for e in table:
            fh.write(f"{e.task_index},{e.candidate_index},{repr(e.score)},{int(e.failed)}\n")

    n_cand = len(candidates)
    means = []
    for ci in range(n_cand):
        vals = [e.score for e in table if e.candidate_index == ci]
        means.append(float(np.mean(vals)))
    higher_better = args.metric != "relerr"
    best_index = 0
    for ci in range(1, n_cand):
        if (means[ci] > means[best_index]) if higher_better else (means[ci] < means[best_index]):
            best_index = ci
    _emit({"best_config": best_path, "scores": scores_path, "best_index": best_index,
           "tasks": len(tasks), "candidates": n_cand, "metric": args.metric})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="afbrecon",
        description="Compressed-sensing parallel-MRI reconstruction experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def add_config(sp):
        sp.add_argument("--config", help="JSON experiment config (flags override it)")

    sp = sub.add_parser("phantom", help="write a synthetic ground-truth image container")
    sp.add_argument("--size", type=int, default=None)
    sp.add_argument("--out", default="phantom")
    add_config(sp)
    sp.set_defaults(func=cmd_phantom)

    sp = sub.add_parser("mask", help="write a sampling-mask container")
    sp.add_argument("--kind", default=None,
                    help="uniform-cartesian | random-cartesian | radial (short: uniform/random/radial)")
    sp.add_argument("--size", type=int, default=None)
    sp.add_argument("--ratio", type=float, default=None)
    sp.add_argument("--acs", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default="mask")
    add_config(sp)
    sp.set_defaults(func=cmd_mask)

    sp = sub.add_parser("simulate", help="simulate undersampled multi-coil measurements")
    sp.add_argument("--truth", default="phantom")
    sp.add_argument("--mask", default="mask")
    sp.add_argument("--maps", default=None, help="existing coil-map container (else generated)")
    sp.add_argument("--coils", type=int, default=None)
    sp.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default="acq")
    add_config(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("recon", help="reconstruct an image from measurement containers")
    sp.add_argument("--kspace", default="acq_kspace")
    sp.add_argument("--maps", default="acq_maps")
    sp.add_argument("--mask", default="mask")
    sp.add_argument("--ref", default=None, help="reference image container for a metric report")
    sp.add_argument("--out", default="recon")
    sp.add_argument("--trace", default=None, help="trace CSV path (default <out>_trace.csv)")
    for key in ("eta0", "tau0", "sigma", "mu", "delta", "epsilon", "alpha", "beta", "gamma"):
        sp.add_argument(f"--{key}", type=float, default=None)
    sp.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    sp.add_argument("--family", default=None, choices=list(REG_FAMILIES))
    sp.add_argument("--lambda-r", dest="lambda_r", type=float, default=None)
    add_config(sp)
    sp.set_defaults(func=cmd_recon)

    sp = sub.add_parser("eval", help="score a reconstruction against a reference")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--out", default=None, help="also write the report JSON here")
    add_config(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sweep", help="run the mask-family x sampling-ratio grid")
    sp.add_argument("--out-dir", dest="out_dir", default=None)
    add_config(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("adapt", help="pick the best solver config over a task set")
    sp.add_argument("--tasks", required=True, help="directory of task subdirectories")
    sp.add_argument("--candidates", required=True, help="JSON file listing candidate configs")
    sp.add_argument("--metric", default="psnr", choices=["psnr", "ssim", "relerr"])
    sp.add_argument("--out-dir", dest="out_dir", default="adapt_out")
    sp.add_argument("--family", default=None, choices=list(REG_FAMILIES))
    sp.add_argument("--lambda-r", dest="lambda_r", type=float, default=None)
    add_config(sp)
    sp.set_defaults(func=cmd_adapt)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1
    except (DimensionError, FormatError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"{args.command}: numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
