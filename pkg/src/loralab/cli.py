"""Batch command-line entry point.

Subcommands: ``bound`` (closed-form envelope report), ``sweep`` (teacher-
student gap grid to CSV), ``lowerbound`` (worst-case construction
experiment), ``verify`` (concentration checks), ``train`` (single training
cell). Configuration comes from a strict JSON file: unknown keys and
out-of-range values are rejected before anything runs. Exit codes: 0 on
success, 2 on validation failure, 3 on runtime failure.

Every run emits a manifest (config echo, effective seed, version, timing,
cell status summary) next to the primary output, or on stderr when the
primary output goes to stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass

from . import __version__
from .adversarial import gordon_verify, lower_bound_experiment, small_ball, union_gordon
from .bounds import BoundConfig, generalization_bound
from .empirical import TrainConfig, diameter_event_frequency
from .network import (Architecture, adapter_to_payload, net_to_payload, save_json)
from .rng import RngKey
from .sweep import gap_sweep, make_teacher_task, records_to_csv, run_cell

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

_REQUIRED = object()


@dataclass(frozen=True)
class _Field:
    kind: str
    default: object = _REQUIRED


def _coerce(value, field: _Field, name: str):
    kind = field.kind
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"config key {name!r} must be an integer")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"config key {name!r} must be a number")
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ValueError(f"config key {name!r} must be a string")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ValueError(f"config key {name!r} must be a boolean")
        return value
    if kind == "int_list":
        if (not isinstance(value, list) or not value
                or any(isinstance(v, bool) or not isinstance(v, int) for v in value)):
            raise ValueError(f"config key {name!r} must be a non-empty list of integers")
        return list(value)
    if kind == "float_or_null":
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"config key {name!r} must be a number or null")
        return float(value)
    if kind == "str_or_null":
        if value is None or isinstance(value, str):
            return value
        raise ValueError(f"config key {name!r} must be a string or null")
    raise AssertionError(f"unhandled field kind {kind}")


def parse_strict(raw: dict, schema: dict, command: str) -> dict:
    if not isinstance(raw, dict):
        raise ValueError(f"{command} config must be a JSON object")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ValueError(f"unknown config keys for {command}: {unknown}")
    cfg = {}
    for name, field in schema.items():
        if name in raw:
            cfg[name] = _coerce(raw[name], field, name)
        elif field.default is _REQUIRED:
            raise ValueError(f"missing required config key for {command}: {name!r}")
        else:
            cfg[name] = field.default
    return cfg


_ARCH_FIELDS = {
    "d": _Field("int"),
    "D": _Field("int"),
    "T": _Field("int"),
    "W": _Field("int"),
    "activation": _Field("str", "relu"),
}

_TASK_FIELDS = {
    "teacher_rank": _Field("int", 4),
    "teacher_scale": _Field("float", 0.3),
    "noise_std": _Field("float", 0.1),
    "input_law": _Field("str", "uniform"),
    "weight_scale": _Field("float_or_null", None),
    "task_seed": _Field("int", 0),
}

_TRAIN_FIELDS = {
    "steps": _Field("int", 2000),
    "learning_rate": _Field("float", 0.01),
    "batch_size": _Field("int", 32),
}

SCHEMAS = {
    "bound": {
        **_ARCH_FIELDS,
        "r": _Field("int"),
        "M": _Field("float"),
        "nu": _Field("float"),
        "R0": _Field("float"),
        "N": _Field("int"),
        "delta": _Field("float"),
        "c2": _Field("float", 1.0),
    },
    "sweep": {
        **_ARCH_FIELDS, **_TASK_FIELDS, **_TRAIN_FIELDS,
        "r_values": _Field("int_list"),
        "N_values": _Field("int_list"),
        "seeds": _Field("int_list"),
        "M": _Field("float"),
        "nu": _Field("float"),
        "delta": _Field("float", 0.05),
        "c2": _Field("float", 1.0),
        "holdout": _Field("int", 10_000),
        "record_timing": _Field("bool", True),
    },
    "lowerbound": {
        "dims": _Field("int_list"),
        "r": _Field("int"),
        "eta": _Field("float"),
        "delta": _Field("float"),
        "N": _Field("int"),
        "trials": _Field("int", 2000),
        "c": _Field("float", 0.5),
        "square_mode": _Field("bool", False),
        "weight_scale": _Field("float", 0.5),
        "seed": _Field("int", 0),
    },
    "verify": {
        "trials": _Field("int", 10_000),
        "seed": _Field("int", 0),
        "c": _Field("float", 0.5),
        "gordon_d_out": _Field("int", 64),
        "gordon_r": _Field("int", 4),
        "gordon_eta": _Field("float", 2.0),
        "union_dims": _Field("int_list", [32, 32]),
        "union_r": _Field("int", 4),
        "union_eta": _Field("float", 2.0),
        "smallball_N": _Field("int", 100),
        "smallball_t": _Field("float", 2.0),
        "diameter_W": _Field("int", 32),
        "diameter_r": _Field("int", 4),
        "diameter_nu": _Field("float", 1.0),
        "diameter_M": _Field("float", 1.0),
        "diameter_eps": _Field("float", 0.05),
        "diameter_draws": _Field("int", 500),
    },
    "train": {
        **_ARCH_FIELDS, **_TASK_FIELDS, **_TRAIN_FIELDS,
        "r": _Field("int"),
        "M": _Field("float"),
        "nu": _Field("float"),
        "delta": _Field("float", 0.05),
        "c2": _Field("float", 1.0),
        "N": _Field("int"),
        "holdout": _Field("int", 10_000),
        "seed": _Field("int", 0),
        "model_out": _Field("str_or_null", None),
    },
}


def _arch_from_cfg(cfg: dict, rank: int) -> Architecture:
    return Architecture(d=cfg["d"], D=cfg["D"], T=cfg["T"], W=cfg["W"], r=rank,
                        activation=cfg["activation"])


def _task_from_cfg(cfg: dict, arch: Architecture):
    return make_teacher_task(RngKey(cfg["task_seed"]).split(0), arch,
                             teacher_rank=cfg["teacher_rank"],
                             teacher_scale=cfg["teacher_scale"],
                             noise_std=cfg["noise_std"],
                             input_law=cfg["input_law"],
                             weight_scale=cfg["weight_scale"])


def cmd_bound(cfg: dict, threads: int) -> tuple[str, dict]:
    arch = _arch_from_cfg(cfg, cfg["r"])
    report = generalization_bound(BoundConfig(
        arch=arch, box_bound=cfg["M"], init_scale=cfg["nu"],
        weight_sup=cfg["R0"], n_samples=cfg["N"], delta=cfg["delta"],
        depth_constant=cfg["c2"]))
    return _json_text(report.to_json_dict()), {}


def cmd_sweep(cfg: dict, threads: int) -> tuple[str, dict]:
    arch = _arch_from_cfg(cfg, 1)
    task = _task_from_cfg(cfg, arch)
    train_cfg = TrainConfig(steps=cfg["steps"], learning_rate=cfg["learning_rate"],
                            batch_size=cfg["batch_size"])
    records = gap_sweep(task, cfg["r_values"], cfg["N_values"], cfg["seeds"],
                        train_cfg, box_bound=cfg["M"], init_scale=cfg["nu"],
                        delta=cfg["delta"], depth_constant=cfg["c2"],
                        holdout_size=cfg["holdout"], n_jobs=threads,
                        record_timing=cfg["record_timing"])
    summary = {
        "cells": len(records),
        "ok": sum(r.status == "ok" for r in records),
        "diverged": sum(r.status == "diverged" for r in records),
    }
    return records_to_csv(records), summary


def cmd_lowerbound(cfg: dict, threads: int) -> tuple[str, dict]:
    report = lower_bound_experiment(
        cfg["dims"], cfg["r"], cfg["eta"], cfg["delta"], cfg["N"], cfg["trials"],
        RngKey(cfg["seed"]).split(1), c=cfg["c"], square_mode=cfg["square_mode"],
        weight_scale=cfg["weight_scale"])
    return _json_text(report.to_json_dict()), {}


def cmd_verify(cfg: dict, threads: int) -> tuple[str, dict]:
    if cfg["trials"] < 1000:
        raise ValueError("trials must be at least 1000")
    key = RngKey(cfg["seed"])
    gordon = gordon_verify(cfg["gordon_d_out"], cfg["gordon_r"], cfg["gordon_eta"],
                           cfg["trials"], key.split(0), c=cfg["c"])
    union = union_gordon(cfg["union_dims"], cfg["union_r"], cfg["union_eta"],
                         cfg["trials"], key.split(1), c=cfg["c"])
    ball = small_ball(cfg["smallball_N"], cfg["smallball_t"], cfg["trials"],
                      key.split(2))
    diameter = diameter_event_frequency(cfg["diameter_W"], cfg["diameter_r"],
                                        cfg["diameter_nu"], cfg["diameter_M"],
                                        cfg["diameter_eps"], cfg["diameter_draws"],
                                        key.split(3))
    payload = {
        "gordon": {"failure_rate": gordon.failure_rate, "bound": gordon.bound,
                   "mean_smin": gordon.mean_smin},
        "union_gordon": {"violation_rate": union.violation_rate, "bound": union.bound},
        "small_ball": {"N": ball.n, "t": ball.t, "p_hat": ball.p_hat,
                       "standard_error": ball.standard_error,
                       "exact": ball.exact_available},
        "diameter_event": {"frequency": diameter,
                           "floor": 1.0 - cfg["diameter_eps"]},
    }
    return _json_text(payload), {}


def cmd_train(cfg: dict, threads: int) -> tuple[str, dict]:
    arch = _arch_from_cfg(cfg, cfg["r"])
    task = _task_from_cfg(cfg, arch)
    train_cfg = TrainConfig(steps=cfg["steps"], learning_rate=cfg["learning_rate"],
                            batch_size=cfg["batch_size"])
    record, student_net, adapter = run_cell(
        task, cfg["r"], cfg["N"], cfg["seed"], train_cfg,
        box_bound=cfg["M"], init_scale=cfg["nu"], delta=cfg["delta"],
        depth_constant=cfg["c2"], holdout_size=cfg["holdout"],
        record_timing=False, return_model=True)
    payload = {
        "seed": record.seed, "r": record.r, "N": record.N,
        "q_formula": record.q_formula, "q_exact": record.q_exact,
        "train_risk": record.train_risk, "holdout_risk": record.holdout_risk,
        "gap": record.gap, "G_star": record.G_star, "R": record.R,
        "A": record.A_term, "L_lora": record.L_lora, "status": record.status,
    }
    if cfg["model_out"]:
        save_json({"net": net_to_payload(student_net),
                   "adapter": adapter_to_payload(adapter)}, cfg["model_out"])
    return _json_text(payload), {}


_COMMANDS = {
    "bound": cmd_bound,
    "sweep": cmd_sweep,
    "lowerbound": cmd_lowerbound,
    "verify": cmd_verify,
    "train": cmd_train,
}


def _json_text(payload: dict) -> str:
    return json.dumps(payload, indent=2) + "\n"


def _write_output(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_manifest(manifest: dict, out_path: str | None) -> None:
    text = json.dumps(manifest) + "\n"
    if out_path:
        with open(out_path + ".manifest.json", "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stderr.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loralab",
        description="Adapter generalization laboratory: bounds, sweeps, and verifiers.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a strict JSON config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's seed fields")
        p.add_argument("--out", default=None, help="primary output path (default: stdout)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    return parser


def _apply_seed_override(command: str, cfg: dict, seed: int | None) -> dict:
    if seed is None:
        return cfg
    if seed < 0 or seed >= 2**64:
        raise ValueError("--seed must fit in an unsigned 64-bit integer")
    cfg = dict(cfg)
    if command in ("lowerbound", "verify", "train"):
        cfg["seed"] = seed
    if command in ("sweep", "train"):
        cfg["task_seed"] = seed
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    manifest = {
        "command": args.command,
        "artifact_version": __version__,
        "seed": args.seed,
        "config": None,
        "status": "error",
        "error": None,
        "wallclock_ms": 0,
    }
    try:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read config {args.config!r}: {exc}") from exc
        cfg = parse_strict(raw, SCHEMAS[args.command], args.command)
        cfg = _apply_seed_override(args.command, cfg, args.seed)
        manifest["config"] = cfg
        if args.threads < 1:
            raise ValueError("--threads must be at least 1")
        text, extra = _COMMANDS[args.command](cfg, args.threads)
    except ValueError as exc:
        manifest["error"] = str(exc)
        manifest["wallclock_ms"] = int(round((time.perf_counter() - started) * 1000))
        _emit_manifest(manifest, args.out)
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # runtime failure of a validated run
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["wallclock_ms"] = int(round((time.perf_counter() - started) * 1000))
        _emit_manifest(manifest, args.out)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    _write_output(text, args.out)
    manifest.update(status="ok", error=None)
    manifest.update(extra)
    manifest["wallclock_ms"] = int(round((time.perf_counter() - started) * 1000))
    _emit_manifest(manifest, args.out)
    return EXIT_OK


def entrypoint() -> None:
    raise SystemExit(main())
