"""Macrospin stochastic LLG solver with spin-orbit torque.

The free layer is a single rigid moment with uniaxial perpendicular
anisotropy. Charge current in the heavy-metal underlayer injects a spin
current polarized along +y; thermal agitation enters as a random field
redrawn every time step. Integration uses the explicit Landau-Lifshitz
form of the Gilbert equation, stepped with stochastic Heun (Stratonovich)
or classical RK4 for noiseless runs.

Units are SI throughout: fields in A/m, currents in A, times in s.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import constants as sc
from scipy.stats import binomtest

log = logging.getLogger(__name__)

MU0 = sc.mu_0
KB = sc.k
HBAR = sc.hbar
Q = sc.e
MU_B = sc.physical_constants["Bohr magneton"][0]
# gyromagnetic ratio of the electron in m/(A s): 2 mu_B mu_0 / hbar
GAMMA = 2.0 * MU_B * MU0 / HBAR

OE = 1000.0 / (4.0 * np.pi)  # A/m per oersted

Z_HAT = np.array([0.0, 0.0, 1.0])
Y_HAT = np.array([0.0, 1.0, 0.0])


class State(str, Enum):
    UP = "up"
    DOWN = "down"

    @property
    def sign(self) -> int:
        return 1 if self is State.UP else -1

    @classmethod
    def from_mz(cls, mz: float) -> "State":
        return cls.UP if mz >= 0 else cls.DOWN


class IntegrationError(RuntimeError):
    """Raised when the magnetization becomes non-finite."""

    def __init__(self, step: int, msg: str = "non-finite magnetization"):
        super().__init__(f"{msg} at step {step}")
        self.step = step


@dataclass(frozen=True)
class MagnetParams:
    """Free layer and heavy-metal stack.

    ``hm_width=None`` means the heavy-metal strip is as wide as the magnet.
    ``barrier_kt`` is the anisotropy barrier Ku*V in units of kB*t_ref.
    """

    diameter: float = 40e-9
    thickness: float = 1.3e-9
    ms: float = 581.36e3
    alpha: float = 0.0122
    barrier_kt: float = 31.44
    theta_sh: float = 0.12
    hm_thickness: float = 10e-9
    hm_width: float | None = None
    temperature: float = 300.0
    h_ext: tuple[float, float, float] = (100.0 * OE, 0.0, 0.0)
    t_ref: float = 300.0

    def __post_init__(self):
        for name in ("diameter", "thickness", "ms", "hm_thickness", "barrier_kt", "t_ref"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.hm_width is not None and not self.hm_width > 0:
            raise ValueError(f"hm_width must be positive, got {self.hm_width}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.theta_sh < 1:
            raise ValueError(f"theta_sh must lie in (0, 1), got {self.theta_sh}")
        # T = 0 is allowed for noiseless validation runs
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if len(self.h_ext) != 3:
            raise ValueError("h_ext must be a 3-vector")

    @property
    def area(self) -> float:
        return np.pi / 4.0 * self.diameter**2

    @property
    def volume(self) -> float:
        return self.area * self.thickness

    @property
    def n_spins(self) -> float:
        return self.ms * self.volume / MU_B

    @property
    def ku(self) -> float:
        """Uniaxial anisotropy energy density (J/m^3)."""
        return self.barrier_kt * KB * self.t_ref / self.volume

    @property
    def hk(self) -> float:
        """Anisotropy field 2 Ku / (mu0 Ms) in A/m."""
        return 2.0 * self.ku / (MU0 * self.ms)

    @property
    def hm_cross_section(self) -> float:
        width = self.diameter if self.hm_width is None else self.hm_width
        return width * self.hm_thickness

    @classmethod
    def from_dict(cls, d: dict) -> "MagnetParams":
        d = dict(d)
        if "h_ext_oe" in d:
            d["h_ext"] = tuple(float(x) * OE for x in d.pop("h_ext_oe"))
        if "h_ext" in d:
            d["h_ext"] = tuple(float(x) for x in d["h_ext"])
        return cls(**d)


@dataclass(frozen=True)
class CurrentPulse:
    amplitude: float = 900e-6
    width: float = 2e-9

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"pulse width must be positive, got {self.width}")
        if not np.isfinite(self.amplitude):
            raise ValueError("pulse amplitude must be finite")


@dataclass(frozen=True)
class LlgConfig:
    dt: float = 1e-12
    integrator: str = "heun"  # "heun" or "rk4"
    renormalize: bool = True
    seed: int = 0
    settle_time: float = 5e-9
    record_every: int = 10
    batch_size: int = 250

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.integrator not in ("heun", "rk4"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.settle_time < 0:
            raise ValueError("settle_time must be >= 0")
        if self.record_every < 1 or self.batch_size < 1:
            raise ValueError("record_every and batch_size must be >= 1")


@dataclass
class Trajectory:
    t: np.ndarray
    m: np.ndarray  # shape (n_samples, 3)
    final_state: State
    initial_state: State

    @property
    def switched(self) -> bool:
        return self.final_state is not self.initial_state

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "mx", "my", "mz"])
            for t, (mx, my, mz) in zip(self.t, self.m):
                w.writerow([repr(float(t)), repr(float(mx)), repr(float(my)), repr(float(mz))])


def effective_field(m: np.ndarray, p: MagnetParams) -> np.ndarray:
    """External field plus the uniaxial anisotropy field along z.

    Works on a single vector or a stack of shape (..., 3).
    """
    m = np.asarray(m, dtype=float)
    h = np.zeros_like(m)
    h[..., 2] = p.hk * m[..., 2]
    return h + np.asarray(p.h_ext, dtype=float)


def thermal_sigma(p: MagnetParams, dt: float) -> float:
    """Per-component standard deviation of the thermal field (A/m)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    a = p.alpha
    return float(np.sqrt(a / (1 + a * a) * 2 * KB * p.temperature / (GAMMA * MU0 * p.ms * p.volume * dt)))


def thermal_field(p: MagnetParams, dt: float, rng: np.random.Generator, size=None) -> np.ndarray:
    shape = (3,) if size is None else tuple(np.atleast_1d(size)) + (3,)
    sigma = thermal_sigma(p, dt)
    if sigma == 0.0:
        return np.zeros(shape)
    return sigma * rng.standard_normal(shape)


def spin_current(amplitude: float, p: MagnetParams) -> np.ndarray:
    """Spin current (A) injected into the free layer, polarized along y."""
    gain = p.theta_sh * p.area / p.hm_cross_section
    return gain * float(amplitude) * Y_HAT


def critical_spin_current(p: MagnetParams) -> float:
    """Zero-temperature macrospin threshold for damping-like SOT switching
    of a perpendicular magnet assisted by an in-plane field along the current.

    Uses Is_c = q Ns gamma (Hk/2 - |Hx|/sqrt 2).
    """
    hx = abs(p.h_ext[0])
    return Q * p.n_spins * GAMMA * (p.hk / 2.0 - hx / np.sqrt(2.0))


def llg_rhs(m: np.ndarray, h: np.ndarray, i_s: np.ndarray, p: MagnetParams) -> np.ndarray:
    """dm/dt of the explicit Landau-Lifshitz form.

    With A = -gamma m x H + (1/(q Ns)) m x (Is x m), the Gilbert equation
    dm/dt = A + alpha m x dm/dt solves to dm/dt = (A + alpha m x A)/(1+alpha^2).

    Double cross products are written as v - (m.v) m. This is exact on the
    unit sphere and pulls |m| back toward 1 when renormalization is off.
    """
    a = p.alpha
    pre = 1.0 / (1 + a * a)
    mxh = np.cross(m, h)
    h_perp = h - np.sum(m * h, axis=-1, keepdims=True) * m
    out = -GAMMA * pre * (mxh - a * h_perp)
    if np.any(i_s):
        i_s = np.broadcast_to(i_s, m.shape)
        damping_like = i_s - np.sum(m * i_s, axis=-1, keepdims=True) * m
        field_like = np.cross(m, i_s)
        out = out + pre / (Q * p.n_spins) * (damping_like + a * field_like)
    return out


def _normalize(m: np.ndarray) -> np.ndarray:
    return m / np.linalg.norm(m, axis=-1, keepdims=True)


def llg_step(
    m: np.ndarray,
    i_s: np.ndarray,
    p: MagnetParams,
    dt: float,
    h_thermal: np.ndarray | None = None,
    method: str = "heun",
    renormalize: bool = True,
) -> np.ndarray:
    """Advance the magnetization by one step of length ``dt``.

    The thermal field, when given, is held fixed over the step so predictor
    and corrector see the same noise increment.
    """
    m = np.asarray(m, dtype=float)
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(i_s))):
        raise ValueError("non-finite input to llg_step")
    h_th = 0.0 if h_thermal is None else h_thermal
    if h_thermal is not None and not np.all(np.isfinite(h_thermal)):
        raise ValueError("non-finite thermal field")

    def f(x):
        return llg_rhs(x, effective_field(x, p) + h_th, i_s, p)

    if method == "heun":
        k1 = f(m)
        k2 = f(m + dt * k1)
        out = m + 0.5 * dt * (k1 + k2)
    elif method == "rk4":
        k1 = f(m)
        k2 = f(m + 0.5 * dt * k1)
        k3 = f(m + 0.5 * dt * k2)
        k4 = f(m + dt * k3)
        out = m + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _normalize(out) if renormalize else out


def magnetic_energy(m: np.ndarray, p: MagnetParams) -> np.ndarray:
    """Zeeman plus anisotropy energy in J."""
    m = np.asarray(m, dtype=float)
    zeeman = -MU0 * p.ms * p.volume * (m @ np.asarray(p.h_ext, dtype=float))
    return zeeman - p.ku * p.volume * m[..., 2] ** 2


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one Monte Carlo trial."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


def initial_magnetization(p: MagnetParams, state: State, rng: np.random.Generator) -> np.ndarray:
    """Easy-axis pole with a Boltzmann-distributed small tilt.

    At T = 0 the tilt is a fixed 1 degree about y, which keeps the
    start off the unstable exact pole.
    """
    if p.temperature > 0:
        var = KB * p.temperature / (2.0 * p.ku * p.volume)
        tx, ty = rng.normal(0.0, np.sqrt(var), size=2)
    else:
        tx, ty = np.deg2rad(1.0), 0.0
    m = np.array([tx, ty, state.sign * 1.0])
    return m / np.linalg.norm(m)


def _check_dt(pulse: CurrentPulse, cfg: LlgConfig) -> None:
    if cfg.dt > pulse.width / 100.0 * (1 + 1e-9):
        raise ValueError(f"dt={cfg.dt} too coarse for a {pulse.width} s pulse (need dt <= width/100)")


def _run_batch(
    pulse: CurrentPulse,
    p: MagnetParams,
    cfg: LlgConfig,
    initial: State,
    trials: Sequence[int],
    record: bool,
):
    """Integrate a batch of independent trials in lockstep.

    Each trial draws its initial tilt and full noise sequence from its own
    stream, so results do not depend on how trials are grouped.
    """
    if cfg.integrator == "rk4" and p.temperature > 0:
        raise ValueError("rk4 integrator is deterministic; use heun for T > 0")
    n_pulse = int(round(pulse.width / cfg.dt))
    n_settle = int(round(cfg.settle_time / cfg.dt))
    n_steps = n_pulse + n_settle
    sigma = thermal_sigma(p, cfg.dt)

    m0 = []
    noise = []
    for k in trials:
        rng = trial_rng(cfg.seed, k)
        m0.append(initial_magnetization(p, initial, rng))
        if sigma > 0:
            noise.append(rng.standard_normal((n_steps, 3)))
    m = np.array(m0)
    noise_arr = sigma * np.stack(noise, axis=1) if noise else None  # (steps, batch, 3)

    i_on = spin_current(pulse.amplitude, p)
    i_off = np.zeros(3)
    samples = [m.copy()] if record else None
    times = [0.0] if record else None
    for n in range(n_steps):
        i_s = i_on if n < n_pulse else i_off
        h_th = None if noise_arr is None else noise_arr[n]
        m = llg_step(m, i_s, p, cfg.dt, h_thermal=h_th, method=cfg.integrator, renormalize=cfg.renormalize)
        if not np.all(np.isfinite(m)):
            raise IntegrationError(n + 1)
        if record and ((n + 1) % cfg.record_every == 0 or n + 1 == n_steps):
            samples.append(m.copy())
            times.append((n + 1) * cfg.dt)
    return m, (np.array(times) if record else None), (np.stack(samples, axis=1) if record else None)


def simulate_switch(
    pulse: CurrentPulse,
    p: MagnetParams,
    cfg: LlgConfig,
    initial: State | str = State.UP,
    trial: int = 0,
) -> Trajectory:
    """Apply one pulse, relax at zero current, and classify the end state.

    ``trial`` selects the random stream, matching trial ``trial`` of
    :func:`estimate_switch_prob` with the same config.
    """
    initial = State(initial)
    _check_dt(pulse, cfg)
    m_end, t, ms = _run_batch(pulse, p, cfg, initial, [trial], record=True)
    return Trajectory(t=t, m=ms[0], final_state=State.from_mz(m_end[0, 2]), initial_state=initial)


@dataclass
class SwitchEstimate:
    probability: float
    half_width: float
    n_switched: int
    n_trials: int
    ci: tuple[float, float] = field(default=(0.0, 1.0))


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = binomtest(k, n).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def estimate_switch_prob(
    pulse: CurrentPulse,
    p: MagnetParams,
    cfg: LlgConfig,
    n_trials: int,
    initial: State | str = State.UP,
) -> SwitchEstimate:
    """Monte Carlo switching probability with a 95% Wilson interval."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    initial = State(initial)
    _check_dt(pulse, cfg)
    n_sw = 0
    for start in range(0, n_trials, cfg.batch_size):
        trials = range(start, min(start + cfg.batch_size, n_trials))
        m_end, _, _ = _run_batch(pulse, p, cfg, initial, trials, record=False)
        n_sw += int(np.sum(np.sign(m_end[:, 2]) != initial.sign))
    lo, hi = wilson_interval(n_sw, n_trials)
    log.debug("switch estimate %d/%d", n_sw, n_trials)
    return SwitchEstimate(n_sw / n_trials, (hi - lo) / 2.0, n_sw, n_trials, (lo, hi))


def with_overrides(p: MagnetParams, **kw) -> MagnetParams:
    return replace(p, **kw)
