"""Experiment drivers shared by the CLI and the acceptance tests.

Each driver takes a resolved config dict (see ``DEFAULTS``) and returns
plain data; file output lives in :mod:`sotbayes.cli`.
"""

from __future__ import annotations

import copy
from typing import Any

import numpy as np

from .arith import DividerConfig, bernoulli_train, divide_trains
from .device import MtjDevice, SwitchCurve, attempt_write, reset
from .llg import (CurrentPulse, LlgConfig, MagnetParams, critical_spin_current, estimate_switch_prob,
                  simulate_switch, spin_current, thermal_sigma)
from .network import compile_to_pulse_network, estimate_conditional, estimate_marginal, exact_infer, load_network
from .pulse import DacSpec, NoiseModel, PulseTrain, run_network_cycles

_CURVE = {"amplitude": {"anchors": [[0.47, 0.01], [0.54, 0.99]], "valid_range": [0.44, 0.58]},
          "width": {"anchors": [[1.0, 0.06], [50.0, 0.98]], "valid_range": [0.1, 100.0]}}
_DAC = {"bits": 6, "i_min": 0.48, "i_max": 0.54}
_DIVIDER = {"window_len": 64, "step_gain": 0.5, "burn_in_windows": 10, "so_init": 0.5, "s2_floor": 0.02}

DEFAULTS: dict[str, dict[str, Any]] = {
    "device-sweep": {
        "seed": 0,
        "curve": _CURVE,
        "amplitude_grid": [0.44, 0.58, 141],
        "width_grid": [0.1, 100.0, 61],
        "mc_trials": 0,
    },
    "llg": {
        "seed": 0,
        "magnet": {"diameter": 40e-9, "thickness": 1.3e-9, "ms": 581.36e3, "alpha": 0.0122, "barrier_kt": 31.44,
                   "theta_sh": 0.12, "hm_thickness": 10e-9, "hm_width": None, "temperature": 300.0,
                   "h_ext_oe": [100.0, 0.0, 0.0]},
        "pulse": {"amplitude": 900e-6, "width": 2e-9},
        "integration": {"dt": 1e-12, "integrator": "heun", "renormalize": True, "settle_time": 5e-9,
                        "record_every": 10},
        "initial": "up",
        "trajectories": 2,
        "trials": 1000,
    },
    "infer": {
        "seed": 0,
        "network": None,
        "cycles": 100_000,
        "curve": _CURVE,
        "dac": _DAC,
        "noise": {"sigma_lsb": 0.0, "mode": "per-write"},
        "zero_disables_source": True,
        "pipelined": False,
        "queries": [["S", "W"], ["R", "W"]],
        "divider": _DIVIDER,
        "dump_trains": False,
    },
    "noise-sweep": {
        "seed": 0,
        "network": None,
        "cycles": 650,
        "samples": 1000,
        "levels": [0.0, 1.0, 2.0, 3.0],
        "noise_mode": "per-run",
        "target": "R",
        "evidence": "W",
        "curve": _CURVE,
        "dac": _DAC,
        "zero_disables_source": True,
        "bins": 40,
    },
    "divider-test": {
        "seed": 0,
        "s1": 0.3,
        "s2": 0.6,
        "cycles": 10_640,
        "curve": _CURVE,
        "dac": _DAC,
        "divider": _DIVIDER,
    },
}


def resolve(command: str, overrides: dict | None = None) -> dict:
    """Deep-merge ``overrides`` over the defaults for ``command``."""
    cfg = copy.deepcopy(DEFAULTS[command])
    _merge(cfg, overrides or {})
    return cfg


def _merge(base: dict, upd: dict, path: str = "") -> None:
    for k, v in upd.items():
        if k not in base:
            raise ValueError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            _merge(base[k], v, f"{path}{k}.")
        else:
            base[k] = v


def amplitude_curve(cfg: dict) -> SwitchCurve:
    return SwitchCurve.from_dict(cfg["curve"]["amplitude"], "logistic-amplitude")


def width_curve(cfg: dict) -> SwitchCurve:
    return SwitchCurve.from_dict(cfg["curve"]["width"], "weibull-width")


def divider_config(cfg: dict) -> DividerConfig:
    return DividerConfig(**cfg["divider"], curve=amplitude_curve(cfg), dac=DacSpec(**cfg["dac"]))


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


# -- device sweep ----------------------------------------------------------

def device_sweep(cfg: dict) -> dict:
    amp, wid = amplitude_curve(cfg), width_curve(cfg)
    lo, hi, n = cfg["amplitude_grid"]
    i_grid = np.round(np.linspace(lo, hi, int(n)), 9)
    lo, hi, n = cfg["width_grid"]
    t_grid = np.geomspace(lo, hi, int(n))
    anchors = [a[0] for a in cfg["curve"]["width"].get("anchors", [])]
    t_grid = np.unique(np.round(np.concatenate([t_grid, anchors]), 9))
    out = {"i_mA": i_grid, "p_amp": np.asarray(amp.probability(i_grid)),
           "t_ms": t_grid, "p_width": np.asarray(wid.probability(t_grid))}
    n_mc = int(cfg["mc_trials"])
    if n_mc > 0:
        out["p_amp_mc"] = _mc_column(amp, i_grid, n_mc, _stream(cfg["seed"], 1))
        out["p_width_mc"] = _mc_column(wid, t_grid, n_mc, _stream(cfg["seed"], 2))
    return out


def _mc_column(curve: SwitchCurve, xs, n: int, rng) -> np.ndarray:
    dev = MtjDevice(curve=curve)
    col = []
    for x in xs:
        k = 0
        for _ in range(n):
            k += attempt_write(dev, float(x), rng)
            reset(dev)
        col.append(k / n)
    return np.array(col)


# -- LLG -------------------------------------------------------------------

def llg_objects(cfg: dict):
    p = MagnetParams.from_dict(cfg["magnet"])
    pulse = CurrentPulse(**cfg["pulse"])
    lc = LlgConfig(seed=int(cfg["seed"]), **cfg["integration"])
    return p, pulse, lc


def llg_run(cfg: dict) -> dict:
    p, pulse, lc = llg_objects(cfg)
    trajs = [simulate_switch(pulse, p, lc, cfg["initial"], trial=k) for k in range(int(cfg["trajectories"]))]
    est = estimate_switch_prob(pulse, p, lc, int(cfg["trials"]), cfg["initial"]) if cfg["trials"] else None
    derived = {
        "volume_m3": p.volume, "n_spins": p.n_spins, "hk_A_per_m": p.hk,
        "thermal_sigma_A_per_m": thermal_sigma(p, lc.dt),
        "spin_current_A": float(np.linalg.norm(spin_current(pulse.amplitude, p))),
        "critical_spin_current_A": critical_spin_current(p),
    }
    return {"trajectories": trajs, "estimate": est, "derived": derived}


# -- network inference -----------------------------------------------------

def compile_from_config(cfg: dict, noise: NoiseModel | None = None):
    net = load_network(cfg["network"])
    noise = noise if noise is not None else NoiseModel(**cfg["noise"])
    compiled = compile_to_pulse_network(net, amplitude_curve(cfg), DacSpec(**cfg["dac"]), noise,
                                        zero_disables_source=cfg["zero_disables_source"])
    return net, compiled


def infer(cfg: dict) -> dict:
    n = int(cfg["cycles"])
    if n < 1:
        raise ValueError("cycles must be >= 1")
    net, compiled = compile_from_config(cfg)
    trains = run_network_cycles(compiled.pulse_net, n, int(cfg["seed"]), pipelined=cfg["pipelined"],
                                engine="vector")
    dcfg = divider_config(cfg)
    use_divider = n > dcfg.burn_in_windows * dcfg.window_len
    ones = PulseTrain(np.ones(n, dtype=np.uint8))
    rows = []
    for vi, v in enumerate(net.order):
        exact = exact_infer(net, v)
        real = exact_infer(compiled.realized, v)
        est = estimate_marginal(trains, v)
        # a marginal is a division by the always-on train
        hw = divide_trains(trains[v], ones, dcfg, _stream(cfg["seed"], 2, vi)).estimate if use_divider else None
        rows.append({"quantity": f"P({v})", "exact": exact, "exact_realized": real, "counter_ratio": est,
                     "hardware_divider": hw, "abs_error": abs(est - exact),
                     "abs_error_realized": abs(est - real),
                     "abs_error_divider": None if hw is None else abs(hw - exact),
                     "display": f"{exact:.2f}/{est:.2f}"})
    for qi, (target, ev) in enumerate(q for q in cfg["queries"] if q[0] in net.cpts and q[1] in net.cpts):
        exact = exact_infer(net, target, {ev: 1})
        real = exact_infer(compiled.realized, target, {ev: 1})
        est = estimate_conditional(trains, target, ev)
        hw = None
        if use_divider:
            hw = estimate_conditional(trains, target, ev, "hardware-divider", dcfg, _stream(cfg["seed"], 1, qi))
        rows.append({"quantity": f"P({target}|{ev})", "exact": exact, "exact_realized": real,
                     "counter_ratio": est, "hardware_divider": hw, "abs_error": abs(est - exact),
                     "abs_error_realized": abs(est - real),
                     "abs_error_divider": None if hw is None else abs(hw - exact),
                     "display": f"{exact:.2f}/{est:.2f}"})
    return {"rows": rows, "trains": trains, "compile_report": compiled.report(), "order": list(net.order)}


# -- noise sweep -----------------------------------------------------------

def noise_sweep(cfg: dict) -> dict:
    n_cycles, n_samples = int(cfg["cycles"]), int(cfg["samples"])
    if n_cycles < 1 or n_samples < 1:
        raise ValueError("cycles and samples must be >= 1")
    target, ev = cfg["target"], cfg["evidence"]
    levels = [float(s) for s in cfg["levels"]]
    sub = {k: cfg[k] for k in ("network", "curve", "dac", "zero_disables_source")}
    per_level = []
    for li, sigma in enumerate(levels):
        noise = NoiseModel(sigma_lsb=sigma, mode=cfg["noise_mode"])
        net, compiled = compile_from_config(sub, noise)
        vals = np.empty(n_samples)
        for k in range(n_samples):
            tr = run_network_cycles(compiled.pulse_net, n_cycles, int(cfg["seed"]), sample=(li, k), engine="vector")
            e = tr[ev]
            vals[k] = np.nan if e.ones == 0 else estimate_conditional(tr, target, ev)
        ok = vals[np.isfinite(vals)]
        per_level.append({
            "sigma_lsb": sigma,
            "samples": vals,
            "n_valid": int(ok.size),
            "mean": float(ok.mean()) if ok.size else None,
            "std": float(ok.std(ddof=1)) if ok.size > 1 else None,
        })
    exact = exact_infer(net, target, {ev: 1})
    # realized probabilities use the nominal DAC codes, independent of noise
    real = exact_infer(compiled.realized, target, {ev: 1})
    return {"levels": per_level, "exact": exact, "exact_realized": real, "query": f"P({target}|{ev}=1)"}


def histogram(vals: np.ndarray, bins: int) -> tuple[np.ndarray, np.ndarray]:
    ok = vals[np.isfinite(vals)]
    return np.histogram(ok, bins=bins, range=(0.0, 1.0), density=True)


def running_stats(vals: np.ndarray):
    ok = vals[np.isfinite(vals)]
    n = np.arange(1, ok.size + 1)
    mean = np.cumsum(ok) / n
    sq = np.cumsum(ok**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        var = (sq - n * mean**2) / (n - 1)
    var[0] = np.nan
    return n, mean, np.sqrt(np.maximum(var, 0.0))


# -- divider ---------------------------------------------------------------

def divider_test(cfg: dict) -> dict:
    s1, s2, n = float(cfg["s1"]), float(cfg["s2"]), int(cfg["cycles"])
    if not (0 < s1 <= 1 and 0 < s2 <= 1):
        raise ValueError("rates must lie in (0, 1]")
    seed = int(cfg["seed"])
    a = bernoulli_train(s1, n, _stream(seed, 0))
    b = bernoulli_train(s2, n, _stream(seed, 1))
    res = divide_trains(a, b, divider_config(cfg), _stream(seed, 2))
    return {"result": res, "target": s1 / s2, "s1_rate": a.rate, "s2_rate": b.rate}
