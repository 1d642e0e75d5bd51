"""Cycle-level emulation of the stochastic MTJ variable circuit.

Every clock cycle runs three global phases for each variable:

    WR   the parent latch bits select one CPT-tuned current source, which
         drives a probabilistic write into the MTJ
    RD   the MTJ state is sensed against the reference resistor and held
         in the clocked latch
    RST  the latch bit is emitted as a pulse on V_o+ (1) or V_o- (0) and
         the MTJ is returned to P

Variables are evaluated in topological order so children see their
parents' latches from the same cycle. With ``pipelined=True`` each hop
instead reads the latch from the previous cycle, as the hardware does.

Two engines produce the same trains for the same seed: a per-cycle state
machine (``engine="cycle"``) and a vectorized path (``engine="vector"``).
Each variable owns a switching stream and a noise stream; both engines
consume them in the same order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .device import MtjDevice, MtjState, SwitchCurve, attempt_write, default_amplitude_curve, read, reset
from .errors import ProtocolError


@dataclass(frozen=True)
class DacSpec:
    bits: int = 6
    i_min: float = 0.48
    i_max: float = 0.54

    def __post_init__(self):
        if self.bits < 1 or not self.i_max > self.i_min:
            raise ValueError("DAC needs bits >= 1 and i_max > i_min")

    @property
    def lsb(self) -> float:
        return (self.i_max - self.i_min) / 2**self.bits


def dac_quantize(i, dac: DacSpec):
    """Round to the nearest DAC code and clamp to the output range."""
    i = np.asarray(i, dtype=float)
    q = dac.i_min + np.round((i - dac.i_min) / dac.lsb) * dac.lsb
    q = np.clip(q, dac.i_min, dac.i_max)
    return float(q) if q.ndim == 0 else q


class NoiseMode(str, Enum):
    PER_WRITE = "per-write"  # fresh draw on every write event
    PER_RUN = "per-run"  # one offset per current source, held for a whole run


@dataclass(frozen=True)
class NoiseModel:
    sigma_lsb: float = 0.0
    enabled: bool = True
    mode: NoiseMode = NoiseMode.PER_WRITE

    def __post_init__(self):
        if self.sigma_lsb < 0:
            raise ValueError("sigma_lsb must be >= 0")
        object.__setattr__(self, "mode", NoiseMode(self.mode))

    @property
    def active(self) -> bool:
        return self.enabled and self.sigma_lsb > 0

    def sigma_ma(self, dac: DacSpec) -> float:
        return self.sigma_lsb * dac.lsb if self.active else 0.0


def apply_noise(i, noise: NoiseModel, dac: DacSpec, rng: np.random.Generator):
    """Add Gaussian current noise; no draw is taken when noise is off."""
    if not noise.active:
        return i
    z = rng.standard_normal(np.shape(i)) if np.ndim(i) else rng.standard_normal()
    return i + noise.sigma_ma(dac) * z


@dataclass
class PulseTrain:
    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8).ravel()
        if self.bits.size and self.bits.max() > 1:
            raise ValueError("pulse train bits must be 0 or 1")

    def __len__(self) -> int:
        return self.bits.size

    @property
    def ones(self) -> int:
        return int(self.bits.sum())

    @property
    def rate(self) -> float:
        if not len(self):
            raise ValueError("rate of an empty train")
        return self.ones / len(self)

    def complement(self) -> "PulseTrain":
        """The V_o- train."""
        return PulseTrain(1 - self.bits)

    def __eq__(self, other) -> bool:
        return isinstance(other, PulseTrain) and np.array_equal(self.bits, other.bits)


def table_index(bits: Iterable[int]) -> int:
    """Row of a parent assignment; the first parent is the most significant bit."""
    idx = 0
    for b in bits:
        idx = 2 * idx + int(b)
    return idx


def parent_keys(n_parents: int) -> list[tuple[int, ...]]:
    return list(product((0, 1), repeat=n_parents))


@dataclass(eq=False)
class BnVariable:
    """One network variable: MTJ, clocked latch and its bank of current sources.

    ``current_table`` maps a parent-bit tuple to a drive current in mA, or
    to None for a source that is not fitted (no write current at all).
    """

    name: str
    current_table: dict[tuple[int, ...], float | None]
    parents: list["BnVariable"] = field(default_factory=list)
    dac: DacSpec = field(default_factory=DacSpec)
    noise: NoiseModel = field(default_factory=NoiseModel)
    device: MtjDevice = field(default_factory=MtjDevice)
    latch: int = 0
    train: list[int] = field(default_factory=list)
    switch_rng: np.random.Generator | None = None
    noise_rng: np.random.Generator | None = None
    _phase: str = "RST"
    _offsets: dict | None = None

    def __post_init__(self):
        keys = set(parent_keys(len(self.parents)))
        if set(self.current_table) != keys:
            raise ValueError(f"{self.name}: current table needs exactly {len(keys)} entries keyed by parent bits")
        eps = 1e-12
        for k, i in self.current_table.items():
            if i is not None and not (self.dac.i_min - eps <= i <= self.dac.i_max + eps):
                raise ValueError(f"{self.name}: current {i} mA for {k} outside the DAC range")

    @property
    def curve(self) -> SwitchCurve:
        return self.device.curve

    def seed_streams(self, seed_seq: np.random.SeedSequence) -> None:
        s_switch, s_noise = seed_seq.spawn(2)
        self.switch_rng = np.random.default_rng(s_switch)
        self.noise_rng = np.random.default_rng(s_noise)

    def begin_run(self) -> None:
        """Clear circuit state and draw held noise offsets for this run."""
        reset(self.device)
        self.latch = 0
        self.train = []
        self._phase = "RST"
        self._offsets = None
        if self.noise.active and self.noise.mode is NoiseMode.PER_RUN:
            keys = parent_keys(len(self.parents))
            z = self.noise_rng.standard_normal(len(keys))
            self._offsets = {k: self.noise.sigma_ma(self.dac) * zk for k, zk in zip(keys, z)}

    def drive_current(self, key: tuple[int, ...]) -> float | None:
        i = self.current_table[key]
        if i is None:
            return None
        if self._offsets is not None:
            return i + self._offsets[key]
        if self.noise.mode is NoiseMode.PER_WRITE:
            return apply_noise(i, self.noise, self.dac, self.noise_rng)
        return i


def write_phase(v: BnVariable, rng: np.random.Generator | None = None,
                parent_bits: tuple[int, ...] | None = None) -> bool:
    """WR: select the current source from the parent latches and write."""
    if v._phase != "RST":
        raise ProtocolError(f"{v.name}: write issued twice without an intervening reset")
    if v.device.state is not MtjState.P:
        raise ProtocolError(f"{v.name}: device not in reset state before write")
    key = tuple(p.latch for p in v.parents) if parent_bits is None else tuple(parent_bits)
    rng = v.switch_rng if rng is None else rng
    switched = attempt_write(v.device, v.drive_current(key), rng)
    v._phase = "WR"
    return switched


def read_phase(v: BnVariable) -> int:
    """RD: latch the sensed MTJ state."""
    if v._phase != "WR":
        raise ProtocolError(f"{v.name}: read before write")
    v.latch = read(v.device)
    v._phase = "RD"
    return v.latch


def reset_and_emit_phase(v: BnVariable) -> int:
    """RST: emit the latched bit as an output pulse and reset the MTJ."""
    if v._phase != "RD":
        raise ProtocolError(f"{v.name}: reset/emit before read")
    v.train.append(v.latch)
    reset(v.device)
    v._phase = "RST"
    return v.latch


class PulseNetwork:
    """Variables wired into a DAG and kept in evaluation order."""

    def __init__(self, variables: Iterable[BnVariable]):
        self.variables = topological_order(list(variables))
        self.by_name = {v.name: v for v in self.variables}

    def __iter__(self):
        return iter(self.variables)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def current_tables(self) -> dict[str, dict]:
        return {v.name: dict(v.current_table) for v in self.variables}

    def seed(self, seed: int, sample: int | tuple[int, ...] = 0) -> None:
        key = (sample,) if isinstance(sample, int) else tuple(sample)
        for idx, v in enumerate(self.variables):
            v.seed_streams(np.random.SeedSequence(seed, spawn_key=(0, *key, idx)))


def topological_order(variables: list[BnVariable]) -> list[BnVariable]:
    """Kahn's algorithm with a lexicographic tiebreak on variable names."""
    names = [v.name for v in variables]
    if len(set(names)) != len(names):
        raise ValueError("duplicate variable names")
    known = set(map(id, variables))
    for v in variables:
        for p in v.parents:
            if id(p) not in known:
                raise ValueError(f"{v.name}: parent {p.name} is not part of the network")
    indeg = {v.name: len(v.parents) for v in variables}
    children: dict[str, list[BnVariable]] = {v.name: [] for v in variables}
    for v in variables:
        for p in v.parents:
            children[p.name].append(v)
    ready = sorted((v for v in variables if indeg[v.name] == 0), key=lambda v: v.name)
    out = []
    while ready:
        v = ready.pop(0)
        out.append(v)
        for c in children[v.name]:
            indeg[c.name] -= 1
            if indeg[c.name] == 0:
                ready.append(c)
        ready.sort(key=lambda v: v.name)
    if len(out) != len(variables):
        raise ValueError("pulse network contains a cycle")
    return out


def run_network_cycles(net: PulseNetwork, n_cycles: int, seed: int, *, sample: int | tuple[int, ...] = 0,
                       pipelined: bool = False, engine: str = "cycle") -> dict[str, PulseTrain]:
    """Clock the network for ``n_cycles`` and return each variable's V_o+ train."""
    if n_cycles < 0:
        raise ValueError("n_cycles must be >= 0")
    net.seed(seed, sample)
    for v in net:
        v.begin_run()
    if engine == "vector":
        return _run_vectorized(net, n_cycles, pipelined)
    if engine != "cycle":
        raise ValueError(f"unknown engine {engine!r}")
    for _ in range(n_cycles):
        snapshot = {v.name: v.latch for v in net} if pipelined else None
        for v in net:
            bits = tuple(snapshot[p.name] for p in v.parents) if pipelined else None
            write_phase(v, parent_bits=bits)
            read_phase(v)
            reset_and_emit_phase(v)
    return {v.name: PulseTrain(v.train) for v in net}


def _run_vectorized(net: PulseNetwork, n: int, pipelined: bool) -> dict[str, PulseTrain]:
    trains: dict[str, np.ndarray] = {}
    for v in net:
        keys = parent_keys(len(v.parents))
        idx = np.zeros(n, dtype=np.int64)
        for p in v.parents:
            bits = trains[p.name]
            if pipelined:
                bits = np.concatenate(([0], bits[:-1])) if n else bits
            idx = 2 * idx + bits
        table = np.array([np.nan if v.current_table[k] is None else v.current_table[k] for k in keys])
        cur = table[idx]
        enabled = ~np.isnan(cur)
        if v._offsets is not None:
            offs = np.array([v._offsets[k] for k in keys])
            cur = cur + offs[idx]
        elif v.noise.active and v.noise.mode is NoiseMode.PER_WRITE:
            z = v.noise_rng.standard_normal(int(enabled.sum()))
            cur[enabled] = cur[enabled] + v.noise.sigma_ma(v.dac) * z
        p = np.zeros(n)
        if enabled.any():
            p[enabled] = v.curve.probability(cur[enabled])
        u = v.switch_rng.random(n)
        out = (u < p).astype(np.int64)
        trains[v.name] = out
        v.train = out.tolist()
        v.latch = int(out[-1]) if n else 0
    return {name: PulseTrain(bits) for name, bits in trains.items()}


def trains_to_csv(trains: Mapping[str, PulseTrain], path: str | Path, order: list[str] | None = None) -> None:
    order = list(trains) if order is None else order
    n = len(next(iter(trains.values()))) if trains else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", *order])
        cols = [trains[k].bits for k in order]
        for c in range(n):
            w.writerow([c, *(int(col[c]) for col in cols)])


def make_root(name: str, current: float | None, **kw) -> BnVariable:
    return BnVariable(name, {(): current}, **kw)


def default_device(curve: SwitchCurve | None = None) -> MtjDevice:
    return MtjDevice(curve=curve or default_amplitude_curve())
