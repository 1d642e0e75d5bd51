"""Command-line entry point: ``sotbayes <subcommand> [flags]``.

Every run writes its data files plus ``summary.json`` into ``--out``. The
summary embeds the fully resolved config and seed; feeding it back through
``--config`` repeats the run exactly.

Exit codes:
  0  success
  2  validation error (bad flag, config, network document or query)
  3  runtime error (integration failure, protocol violation, I/O failure)
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import sys
from enum import Enum
from pathlib import Path

import numpy as np

from . import experiments as ex
from .errors import ProtocolError, ZeroEvidenceError
from .llg import IntegrationError
from .network import load_network
from .pulse import trains_to_csv

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("sotbayes")


class ValidationError(Exception):
    pass


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, Enum):
        return x.value
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def config_hash(cfg: dict) -> str:
    blob = json.dumps(_jsonable(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def write_summary(out: Path, command: str, cfg: dict, results: dict) -> Path:
    doc = {
        "command": command,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "results": results,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    path = out / "summary.json"
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return path


def _num(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return repr(x) if math.isfinite(x) else ""


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, (int, str)) else _num(v) for v in r])


# -- subcommands -----------------------------------------------------------

def run_device_sweep(cfg: dict, out: Path) -> dict:
    r = ex.device_sweep(cfg)
    mc = "p_amp_mc" in r
    write_csv(out / "amplitude_sweep.csv", ["i_mA", "p"] + (["p_mc"] if mc else []),
              zip(r["i_mA"], r["p_amp"], *([r["p_amp_mc"]] if mc else [])))
    write_csv(out / "width_sweep.csv", ["t_ms", "p"] + (["p_mc"] if mc else []),
              zip(r["t_ms"], r["p_width"], *([r["p_width_mc"]] if mc else [])))
    amp, wid = ex.amplitude_curve(cfg), ex.width_curve(cfg)
    return {"amplitude_curve": amp.to_dict(), "width_curve": wid.to_dict(),
            "files": ["amplitude_sweep.csv", "width_sweep.csv"]}


def run_llg(cfg: dict, out: Path) -> dict:
    r = ex.llg_run(cfg)
    files = []
    for k, tr in enumerate(r["trajectories"]):
        name = f"trajectory_{k}.csv"
        tr.to_csv(out / name)
        files.append(name)
    est = r["estimate"]
    res = {
        "derived": r["derived"],
        "trajectories": [{"file": f, "initial": t.initial_state, "final": t.final_state, "switched": t.switched}
                         for f, t in zip(files, r["trajectories"])],
        "files": files,
    }
    if est is not None:
        res["switch_probability"] = {"p": est.probability, "ci95": list(est.ci), "half_width": est.half_width,
                                     "n_switched": est.n_switched, "n_trials": est.n_trials}
    return res


def run_infer(cfg: dict, out: Path) -> dict:
    r = ex.infer(cfg)
    cols = ["quantity", "exact", "exact_realized", "counter_ratio", "hardware_divider", "abs_error",
            "abs_error_realized", "abs_error_divider", "display"]
    write_csv(out / "inference.csv", cols, ([row.get(c) for c in cols] for row in r["rows"]))
    files = ["inference.csv"]
    if cfg["dump_trains"]:
        trains_to_csv(r["trains"], out / "trains.csv", r["order"])
        files.append("trains.csv")
    for row in r["rows"]:
        log.info("%-8s exact/computed %s", row["quantity"], row["display"])
    return {"rows": r["rows"], "compile": r["compile_report"], "files": files}


def run_noise_sweep(cfg: dict, out: Path) -> dict:
    r = ex.noise_sweep(cfg)
    levels = r["levels"]
    tags = [f"sigma_{lv['sigma_lsb']:g}" for lv in levels]
    write_csv(out / "noise_sweep.csv", ["sigma_lsb", "n_samples", "n_valid", "mean", "std"],
              ([lv["sigma_lsb"], len(lv["samples"]), lv["n_valid"], lv["mean"], lv["std"]] for lv in levels))
    n = int(cfg["samples"])
    write_csv(out / "samples.csv", ["sample", *tags],
              ([k, *(lv["samples"][k] for lv in levels)] for k in range(n)))

    hist_cols, edges = [], None
    for lv in levels:
        dens, edges = ex.histogram(lv["samples"], int(cfg["bins"]))
        hist_cols.append(dens)
    write_csv(out / "histogram.csv", ["bin_lo", "bin_hi", *tags],
              ([edges[b], edges[b + 1], *(h[b] for h in hist_cols)] for b in range(len(edges) - 1)))

    conv = [ex.running_stats(lv["samples"]) for lv in levels]
    m = max((len(c[0]) for c in conv), default=0)
    header = ["n"] + [f"{t}_{s}" for t in tags for s in ("mean", "std")]

    def conv_row(i):
        row = [i + 1]
        for cn, mean, std in conv:
            row += [mean[i], std[i]] if i < len(cn) else [None, None]
        return row

    write_csv(out / "convergence.csv", header, (conv_row(i) for i in range(m)))
    summary = [{k: lv[k] for k in ("sigma_lsb", "n_valid", "mean", "std")} | {"n_samples": len(lv["samples"])}
               for lv in levels]
    for s in summary:
        log.info("sigma %g LSB: mean %s std %s", s["sigma_lsb"], s["mean"], s["std"])
    return {"query": r["query"], "exact": r["exact"], "exact_realized": r["exact_realized"], "levels": summary,
            "files": ["noise_sweep.csv", "samples.csv", "histogram.csv", "convergence.csv"]}


def run_divider_test(cfg: dict, out: Path) -> dict:
    r = ex.divider_test(cfg)
    res = r["result"]
    write_csv(out / "divider_windows.csv", ["window", "so_estimate"], res.window_rows)
    return {
        "target": r["target"], "estimate": res.estimate, "abs_error": abs(res.estimate - r["target"]),
        "so_final": res.so_final, "so_mean": res.so_mean, "s1_rate": r["s1_rate"], "s2_rate": r["s2_rate"],
        "near_zero_s2": res.near_zero_s2, "burn_in_cycles": res.burn_in_cycles,
        "files": ["divider_windows.csv"],
    }


RUNNERS = {
    "device-sweep": run_device_sweep,
    "llg": run_llg,
    "infer": run_infer,
    "noise-sweep": run_noise_sweep,
    "divider-test": run_divider_test,
}

# where each common flag lands in a subcommand's config; absent = not applicable
_COMMON = {
    "cycles": {"infer": "cycles", "noise-sweep": "cycles", "divider-test": "cycles"},
    "samples": {"device-sweep": "mc_trials", "llg": "trials", "noise-sweep": "samples"},
    "network": {"infer": "network", "noise-sweep": "network"},
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config, or a summary.json from an earlier run")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory (default: results)")
    common.add_argument("--cycles", type=int, help="clock cycles per run")
    common.add_argument("--samples", type=int,
                        help="noise-sweep samples per level; llg trials; device-sweep Monte Carlo trials")
    common.add_argument("--noise-lsb", type=float, help="write-noise sigma in DAC LSB")
    common.add_argument("--network", type=str, help="network document (JSON)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="sotbayes", description="SOT-MTJ stochastic Bayesian inference toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("device-sweep", parents=[common], help="tabulate the empirical switching curves")
    p.add_argument("--mc-trials", type=int, help="Monte Carlo trials per grid point (0 disables)")

    p = sub.add_parser("llg", parents=[common], help="stochastic macrospin switching simulation")
    p.add_argument("--trials", type=int, help="trials for the switching-probability estimate")
    p.add_argument("--trajectories", type=int, help="number of trajectory CSVs to write")
    p.add_argument("--amplitude", type=float, help="pulse amplitude in A")
    p.add_argument("--width", type=float, help="pulse width in s")
    p.add_argument("--temperature", type=float, help="temperature in K")
    p.add_argument("--dt", type=float, help="time step in s")
    p.add_argument("--integrator", choices=["heun", "rk4"])
    p.add_argument("--initial", choices=["up", "down"])

    p = sub.add_parser("infer", parents=[common], help="run the pulse network and compare with the oracle")
    p.add_argument("--noise-mode", choices=["per-write", "per-run"])
    p.add_argument("--pipelined", action="store_true", default=None)
    p.add_argument("--dump-trains", action="store_true", default=None)
    p.add_argument("--clamp-zero", action="store_true", default=None,
                   help="realize zero CPT entries at the DAC floor instead of disabling the source")

    p = sub.add_parser("noise-sweep", parents=[common], help="P(target|evidence) spread versus write noise")
    p.add_argument("--levels", type=float, nargs="+", help="noise levels in LSB")
    p.add_argument("--noise-mode", choices=["per-write", "per-run"])
    p.add_argument("--bins", type=int)
    p.add_argument("--clamp-zero", action="store_true", default=None)

    p = sub.add_parser("divider-test", parents=[common], help="drive the divider with Bernoulli sources")
    p.add_argument("--s1", type=float)
    p.add_argument("--s2", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--gain", type=float)
    return ap


def load_config_file(path: Path, command: str) -> dict:
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"cannot read config {path}: {e}") from e
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    if "config" in doc and "command" in doc:
        if doc["command"] != command:
            raise ValidationError(f"config was recorded for {doc['command']!r}, not {command!r}")
        doc = doc["config"]
    return doc


def overrides_from_args(args, command: str) -> dict:
    o: dict = {}
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise ValidationError("--seed must be an unsigned 64-bit integer")
        o["seed"] = args.seed
    for flag, where in _COMMON.items():
        val = getattr(args, flag)
        if val is None:
            continue
        if command not in where:
            raise ValidationError(f"--{flag} does not apply to {command}")
        o[where[command]] = val
    if args.noise_lsb is not None:
        if command == "infer":
            o.setdefault("noise", {})["sigma_lsb"] = args.noise_lsb
        elif command == "noise-sweep":
            o["levels"] = [args.noise_lsb]
        else:
            raise ValidationError(f"--noise-lsb does not apply to {command}")

    def put(key, val, *path):
        if val is None:
            return
        d = o
        for p in path:
            d = d.setdefault(p, {})
        d[key] = val

    if command == "device-sweep":
        put("mc_trials", args.mc_trials)
    elif command == "llg":
        put("trials", args.trials)
        put("trajectories", args.trajectories)
        put("initial", args.initial)
        put("amplitude", args.amplitude, "pulse")
        put("width", args.width, "pulse")
        put("temperature", args.temperature, "magnet")
        put("dt", args.dt, "integration")
        put("integrator", args.integrator, "integration")
    elif command == "infer":
        put("mode", args.noise_mode, "noise")
        put("pipelined", args.pipelined)
        put("dump_trains", args.dump_trains)
        if args.clamp_zero:
            o["zero_disables_source"] = False
    elif command == "noise-sweep":
        put("levels", args.levels)
        put("noise_mode", args.noise_mode)
        put("bins", args.bins)
        if args.clamp_zero:
            o["zero_disables_source"] = False
    elif command == "divider-test":
        put("s1", args.s1)
        put("s2", args.s2)
        put("window_len", args.window, "divider")
        put("step_gain", args.gain, "divider")
    return o


def _check_network(path: str) -> None:
    try:
        load_network(path)
    except OSError as e:
        raise ValidationError(f"cannot read network {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ValidationError(f"network {path} is not valid JSON: {e}") from e


def _apply(cfg: dict, o: dict) -> dict:
    merged = json.loads(json.dumps(cfg))
    ex._merge(merged, o)
    return merged


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    command = args.command
    try:
        base = load_config_file(args.config, command) if args.config else {}
        cfg = _apply(ex.resolve(command, base), overrides_from_args(args, command))
        if cfg.get("network"):
            _check_network(cfg["network"])
        args.out.mkdir(parents=True, exist_ok=True)
    except (ValidationError, ValueError, KeyError, TypeError) as e:
        print(f"sotbayes: validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"sotbayes: cannot create output directory: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    try:
        results = RUNNERS[command](cfg, args.out)
        path = write_summary(args.out, command, cfg, results)
    except (IntegrationError, ProtocolError, ZeroEvidenceError, OSError) as e:
        print(f"sotbayes: runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, KeyError, TypeError) as e:
        print(f"sotbayes: validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
