"""``pulseforge`` command-line interface.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 tolerance not
reached (best-effort outputs still written), 5 degenerate fit (trace still
written).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import config as C
from .amplifier import edge_ratio, forward_amplify, inverse_preshape, output_energy
from .calibration import (SimulatedPlant, analytic_drive, closed_loop_preshape, eval_preshape,
                          project_preshape, pulse_support)
from .dynamics import monte_carlo_rabi, monte_carlo_ramsey
from .errors import ConfigError, FitDegenerateError, PulseforgeError
from .fitting import fit_trace
from .sequencer import center_blue_pulse, generate_burst, select_single_pulse
from .waveform import Waveform, read_csv, rms_deviation, total_energy, write_csv

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TOLERANCE, EXIT_FIT = 0, 2, 3, 4, 5

MANIFESTS = {
    "amplify": ["output.csv", "summary.json"],
    "preshape": ["analytic.csv", "preshaped.csv", "achieved.csv", "loop_report.json", "summary.json"],
    "rabi": ["trace.csv", "fit.json", "summary.json"],
    "ramsey": ["trace.csv", "fit.json", "summary.json"],
    "sequence": ["plan.json", "summary.json"],
}


class DataProblem(Exception):
    """Input data missing or unusable (exit 3)."""


class Run:
    """Per-invocation context: resolved config, output directory and written files."""

    def __init__(self, command: str, sc: C.Scenario, out_dir: Path, seed: int, threads: int):
        self.command = command
        self.sc = sc
        self.out_dir = out_dir
        self.seed = seed
        self.threads = threads
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(name)
        return p

    def write_json(self, name: str, obj) -> None:
        text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
        self.path(name).write_text(text, encoding="utf-8")

    def summary(self, metrics: dict, status: str = "ok") -> None:
        files = sorted(set(self.files) | {"summary.json"})
        self.write_json("summary.json", {
            "command": self.command,
            "status": status,
            "config_sha256": self.sc.sha256,
            "seed": self.seed,
            "version": __version__,
            "metrics": metrics,
            "files": files,
        })


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def _read_waveform(path: Path) -> Waveform:
    try:
        return read_csv(path)
    except FileNotFoundError:
        raise DataProblem(f"input file not found: {path}") from None
    except OSError as exc:
        raise DataProblem(f"cannot read {path}: {exc.strerror}") from None
    except PulseforgeError as exc:
        raise DataProblem(f"{path}: {exc}") from None


def _input_path(run: Run, arg: str | None, key: str) -> Path:
    if arg:
        return Path(arg)
    rel = run.sc.doc.get("io", {}).get(key)
    if rel is None:
        raise ConfigError(f"no input file given and io.{key} is not set")
    return run.sc.resolve(rel)


# -- commands ----------------------------------------------------------------

def cmd_amplify(run: Run, args) -> int:
    amp = C.amplifier_params(run.sc)
    inp = _read_waveform(_input_path(run, args.input, "input_csv"))
    try:
        out = forward_amplify(inp, amp)
    except PulseforgeError as exc:
        raise DataProblem(str(exc)) from None
    write_csv(run.path("output.csv"), out)
    metrics = {
        "g0": amp.g0, "e_sat_j": amp.e_sat,
        "input_energy_j": total_energy(inp),
        "output_energy_j": total_energy(out),
        "output_energy_closed_form_j": output_energy(inp, amp),
        "peak_output_w": float(out.samples.max()),
    }
    if np.any(inp.samples > 0):
        metrics["edge_gain_ratio"] = edge_ratio(out, inp)
    run.summary(metrics)
    return EXIT_OK


def _target(run: Run, args) -> Waveform:
    pre = run.sc.section("preshape")
    if args.target or "target_csv" in run.sc.doc.get("io", {}):
        return _read_waveform(_input_path(run, args.target, "target_csv"))
    if "target" not in pre:
        raise ConfigError("preshape needs a target: positional CSV, io.target_csv or preshape.target")
    t = pre["target"]
    return Waveform.square(C.grid_spec(run.sc), t["start_s"], t["width_s"], t["level_w"])


def cmd_preshape(run: Run, args) -> int:
    pre = run.sc.section("preshape")
    amp = C.amplifier_params(run.sc)
    target = _target(run, args)
    win = C.window_spec(pre["window"])
    plant_doc = run.sc.doc.get("plant", {})
    try:
        inv = inverse_preshape(target, amp)
        win.mask(target.grid)
        start, width = pulse_support(target)
    except PulseforgeError as exc:
        raise DataProblem(str(exc)) from None
    # without an explicit seed power, size it so the analytic drive peaks at drive_peak
    seed_power = plant_doc.get("seed_power_w",
                               float(inv.samples.max()) / plant_doc.get("drive_peak", 0.8))
    cfg = C.plant_config(run.sc, amp, seed_power, run.seed)
    plant = SimulatedPlant(cfg)
    analytic = analytic_drive(target, cfg)
    write_csv(run.path("analytic.csv"), analytic)

    dump = pre.get("dump_iterations", False)
    outputs: dict[int, Waveform] = {}

    def record(it, drive, out, rms):
        outputs[it] = out
        if dump:
            write_csv(run.path(f"iterations/drive_{it:04d}.csv"), drive)
            write_csv(run.path(f"iterations/output_{it:04d}.csv"), out)

    init = project_preshape(analytic, width, start)
    tol = pre.get("tol", 0.01)
    best, report = closed_loop_preshape(
        target, plant, init, win, tol, pre.get("max_iter", 50),
        level_tol=pre.get("level_tol", 0.05), method=pre.get("method", "simplex-ls"),
        on_evaluation=record)
    best_it = next(r.iteration for r in report.records
                   if r.params == best and r.rms == report.best_rms)
    write_csv(run.path("preshaped.csv"), eval_preshape(best, target.grid, width, start))
    write_csv(run.path("achieved.csv"), outputs[best_it])
    run.write_json("loop_report.json", report.to_dict())
    metrics = {
        "g0": amp.g0, "e_sat_j": amp.e_sat, "seed_power_w": seed_power,
        "analytic_open_loop_rms": rms_deviation(plant(analytic), target, win),
        "initial_rms": report.initial_rms,
        "best_rms": report.best_rms,
        "best_level_error": report.best_level_error,
        "best_iteration": best_it,
        "iterations": report.iterations,
        "tol": tol,
        "reached_tol": report.reached_tol,
        "clipped_measurements": plant.clipped_calls,
    }
    ok = report.reached_tol
    run.summary(metrics, "ok" if ok else "tolerance_not_reached")
    if not ok:
        print(f"pulseforge: closed loop did not reach tol {tol:g} in {report.iterations} "
              f"measurements (best RMS {report.best_rms:.4g})", file=sys.stderr)
    return EXIT_OK if ok else EXIT_TOLERANCE


def _write_trace(run: Run, trace) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x_s", "p0_mean", "p0_stderr"])
    for x, p, e in zip(trace.x, trace.p0, trace.stderr):
        w.writerow([repr(float(x)), repr(float(p)), repr(float(e))])
    run.path("trace.csv").write_text(buf.getvalue(), encoding="utf-8")


def _dynamics(run: Run, kind: str) -> int:
    d = run.sc.section("dynamics")
    cfg = C.excitation_config(run.sc)
    noise = C.noise_model(run.sc, run.seed)
    xs = C.scan_values(run.sc)
    if kind == "rabi":
        trace = monte_carlo_rabi(xs, cfg, noise, threads=run.threads)
    else:
        trace = monte_carlo_ramsey(xs, cfg, noise, 2 * math.pi * d.get("detuning_offset_hz", 0.0),
                                   threads=run.threads)
    _write_trace(run, trace)
    envelope = d.get("envelope", "gaussian")
    metrics = {"omega_rad_s": cfg.omega, "omega_hz": cfg.omega / (2 * math.pi),
               "doppler_sigma_rad_s": noise.doppler_sigma, "shots": noise.shots}
    try:
        fit = fit_trace(trace, envelope, weighted=d.get("weighted_fit", False))
    except FitDegenerateError as exc:
        metrics["fit_error"] = str(exc)
        run.summary(metrics, "fit_degenerate")
        print(f"pulseforge: fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    run.write_json("fit.json", fit.to_dict())
    metrics.update({"fit_frequency_hz": fit.frequency / (2 * math.pi),
                    "fit_decay_1e_s": fit.decay_1e, "fit_contrast": fit.contrast,
                    "envelope_kind": fit.envelope_kind})
    run.summary(metrics)
    return EXIT_OK


def cmd_rabi(run: Run, args) -> int:
    return _dynamics(run, "rabi")


def cmd_ramsey(run: Run, args) -> int:
    return _dynamics(run, "ramsey")


def cmd_sequence(run: Run, args) -> int:
    burst_cfg, ttl, flat, blue_width = C.sequence_inputs(run.sc)
    burst = generate_burst(burst_cfg)
    try:
        pulse = select_single_pulse(burst, ttl)
        plan = center_blue_pulse(pulse, flat, blue_width)
    except PulseforgeError as exc:
        raise DataProblem(str(exc)) from None
    d = plan.to_dict()
    d["burst"] = [{"start_s": p.start, "width_s": p.width} for p in burst]
    run.write_json("plan.json", d)
    run.summary({"selected_pulse_start_s": pulse.start, "blue_start_s": plan.blue_pulse.start,
                 "margin_s": plan.margin_left, "warnings": d["warnings"]})
    return EXIT_OK


COMMANDS = {"amplify": cmd_amplify, "preshape": cmd_preshape, "rabi": cmd_rabi,
            "ramsey": cmd_ramsey, "sequence": cmd_sequence}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario JSON file")
    common.add_argument("--out-dir", help="output directory (default: $PULSEFORGE_OUT_DIR, "
                                          "io.out_dir, or ./out)")
    common.add_argument("--seed", type=int, help="override io.seed")
    common.add_argument("--threads", type=int, default=1, help="Monte-Carlo worker threads")
    common.add_argument("--dry-run", action="store_true",
                        help="validate the config and print the planned outputs")
    p = argparse.ArgumentParser(prog="pulseforge", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("amplify", parents=[common], help="forward-amplify an input waveform") \
        .add_argument("input", nargs="?", help="input CSV (default: io.input_csv)")
    sub.add_parser("preshape", parents=[common], help="analytic + closed-loop pre-shaping") \
        .add_argument("target", nargs="?", help="target CSV (default: io.target_csv or preshape.target)")
    sub.add_parser("rabi", parents=[common], help="Monte-Carlo Rabi scan and fit")
    sub.add_parser("ramsey", parents=[common], help="Monte-Carlo Ramsey scan and fit")
    sub.add_parser("sequence", parents=[common], help="burst selection and blue-pulse timing")
    sub.add_parser("schema", help="print the config JSON schema")
    return p


def _out_dir(args, sc: C.Scenario) -> Path:
    if args.out_dir:
        return Path(args.out_dir)
    env = os.environ.get("PULSEFORGE_OUT_DIR")
    if env:
        return Path(env)
    if "out_dir" in sc.doc.get("io", {}):
        return sc.resolve(sc.doc["io"]["out_dir"])
    return Path("out")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(C.SCHEMA, indent=2, sort_keys=True))
        return EXIT_OK
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        sc = C.load_config(args.config)
        out_dir = _out_dir(args, sc)
        seed = sc.seed if args.seed is None else args.seed
        if args.dry_run:
            _check_sections(args.command, sc)
            print(json.dumps({"command": args.command, "config_sha256": sc.sha256,
                              "out_dir": str(out_dir), "seed": seed,
                              "files": MANIFESTS[args.command]}, indent=2))
            return EXIT_OK
        run = Run(args.command, sc, out_dir, seed, args.threads)
        return COMMANDS[args.command](run, args)
    except ConfigError as exc:
        print(f"pulseforge: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataProblem as exc:
        print(f"pulseforge: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PulseforgeError as exc:
        print(f"pulseforge: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def _check_sections(command: str, sc: C.Scenario) -> None:
    # build every model object the command needs, without computing anything
    if command in ("amplify", "preshape"):
        C.amplifier_params(sc)
    if command == "preshape":
        pre = sc.section("preshape")
        C.window_spec(pre["window"])
        if "target" in pre and "target_csv" not in sc.doc.get("io", {}):
            C.grid_spec(sc)
    if command in ("rabi", "ramsey"):
        C.excitation_config(sc)
        C.noise_model(sc, sc.seed)
        C.scan_values(sc)
    if command == "sequence":
        C.sequence_inputs(sc)


if __name__ == "__main__":
    sys.exit(main())
