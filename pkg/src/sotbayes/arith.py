"""Pulse-train arithmetic: AND multiplication and the rate-matching divider.

The divider drives its own stochastic MTJ element (MTJ3) at a programmable
rate ``so``. Two up-counters accumulate S1 pulses and S2 AND SO pulses over
a window; at the window boundary the feedback logic moves ``so`` by
``step_gain * (count_s1 - count_s2so) / window_len``. The only stable point
of the expected update is ``so = S1 / S2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .device import MtjDevice, SwitchCurve, attempt_write, current_for_probability, default_amplitude_curve, read, reset
from .pulse import DacSpec, PulseTrain, dac_quantize


def and_multiply(a: PulseTrain, b: PulseTrain) -> PulseTrain:
    if len(a) != len(b):
        raise ValueError(f"train lengths differ: {len(a)} vs {len(b)}")
    return PulseTrain(a.bits & b.bits)


@dataclass(frozen=True)
class DividerConfig:
    window_len: int = 64
    step_gain: float = 0.5
    burn_in_windows: int = 10
    so_init: float = 0.5
    s2_floor: float = 0.02
    curve: SwitchCurve = field(default_factory=default_amplitude_curve)
    dac: DacSpec = field(default_factory=DacSpec)

    def __post_init__(self):
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")
        if not self.step_gain > 0:
            raise ValueError("step_gain must be positive")
        if self.burn_in_windows < 0:
            raise ValueError("burn_in_windows must be >= 0")

    @property
    def p_floor(self) -> float:
        return float(self.curve.probability(self.dac.i_min))

    @property
    def p_ceil(self) -> float:
        return float(self.curve.probability(self.dac.i_max))

    def to_dict(self) -> dict:
        return {
            "window_len": self.window_len,
            "step_gain": self.step_gain,
            "burn_in_windows": self.burn_in_windows,
            "so_init": self.so_init,
            "s2_floor": self.s2_floor,
        }


@dataclass
class DividerState:
    cfg: DividerConfig
    rng: np.random.Generator
    so_estimate: float = 0.5
    count_s1: int = 0
    count_s2so: int = 0
    cycle: int = 0
    device: MtjDevice = None

    def __post_init__(self):
        if self.device is None:
            self.device = MtjDevice(curve=self.cfg.curve)
        self.set_rate(self.so_estimate)

    def set_rate(self, so: float) -> None:
        self.so_estimate = self.clamp(so)
        self._current = dac_quantize(current_for_probability(self.so_estimate, self.cfg.curve), self.cfg.dac)

    def clamp(self, so: float) -> float:
        return min(max(so, self.cfg.p_floor), self.cfg.p_ceil)

    @property
    def drive_current(self) -> float:
        return self._current

    @property
    def window_len(self) -> int:
        return self.cfg.window_len

    @property
    def step_gain(self) -> float:
        return self.cfg.step_gain


def divider_step(d: DividerState, s1_bit: int, s2_bit: int) -> int:
    """One clock of the divider; returns the SO output bit.

    The output element runs the same write/read/reset cycle as a network
    variable, driven through the DAC at the current ``so`` setting.
    """
    attempt_write(d.device, d.drive_current, d.rng)
    so_bit = read(d.device)
    reset(d.device)
    d.count_s1 += int(s1_bit)
    d.count_s2so += int(s2_bit) & so_bit
    d.cycle += 1
    if d.cycle % d.cfg.window_len == 0:
        delta = d.cfg.step_gain * (d.count_s1 - d.count_s2so) / d.cfg.window_len
        d.set_rate(d.so_estimate + delta)
        d.count_s1 = d.count_s2so = 0
    return so_bit


@dataclass
class DivisionResult:
    train: PulseTrain
    estimate: float  # SO output rate after burn-in
    so_final: float
    so_mean: float  # mean programmed rate after burn-in
    so_trajectory: np.ndarray  # setting after each window
    s2_rate: float
    near_zero_s2: bool
    burn_in_cycles: int

    @property
    def window_rows(self):
        return list(enumerate(self.so_trajectory.tolist(), start=1))


def divide_trains(s1, s2, cfg: DividerConfig | None = None, rng: np.random.Generator | int | None = None) -> DivisionResult:
    """Servo the output element until rate(S2 AND SO) matches rate(S1).

    The reported estimate is the SO pulse rate over the cycles after the
    burn-in windows. A warning is emitted and ``near_zero_s2`` set when the
    S2 rate is below ``cfg.s2_floor``.
    """
    cfg = cfg or DividerConfig()
    s1 = s1 if isinstance(s1, PulseTrain) else PulseTrain(s1)
    s2 = s2 if isinstance(s2, PulseTrain) else PulseTrain(s2)
    if len(s1) != len(s2):
        raise ValueError("S1 and S2 trains must have equal length")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    burn = cfg.burn_in_windows * cfg.window_len
    if len(s1) <= burn:
        raise ValueError(f"need more than {burn} cycles to clear the burn-in")

    d = DividerState(cfg, rng, so_estimate=cfg.so_init)
    out = np.empty(len(s1), dtype=np.uint8)
    traj, post_so = [], []
    for c, (b1, b2) in enumerate(zip(s1.bits.tolist(), s2.bits.tolist())):
        so_now = d.so_estimate
        out[c] = divider_step(d, b1, b2)
        if c >= burn:
            post_so.append(so_now)
        if d.cycle % cfg.window_len == 0:
            traj.append(d.so_estimate)

    s2_rate = s2.rate
    low = s2_rate < cfg.s2_floor
    if low:
        warnings.warn(f"division by near-zero rate: S2 rate {s2_rate:.4f} < {cfg.s2_floor}", RuntimeWarning,
                      stacklevel=2)
    post = out[burn:]
    return DivisionResult(
        train=PulseTrain(out),
        estimate=float(post.mean()),
        so_final=d.so_estimate,
        so_mean=float(np.mean(post_so)),
        so_trajectory=np.array(traj),
        s2_rate=s2_rate,
        near_zero_s2=low,
        burn_in_cycles=burn,
    )


def bernoulli_train(rate: float, n: int, rng: np.random.Generator) -> PulseTrain:
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    return PulseTrain(rng.random(n) < rate)
