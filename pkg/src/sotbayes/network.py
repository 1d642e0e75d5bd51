"""Binary Bayesian networks: loading, exact enumeration, and compilation to pulses.

Network documents are JSON::

    {"name": "...", "variables": [
        {"name": "W", "parents": ["S", "R"], "cpt": [p00, p01, p10, p11]}, ...]}

``cpt`` holds P(var = 1) for each parent assignment in row-major order with
the first listed parent as the most significant bit.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from itertools import product
from pathlib import Path
from typing import Mapping

import numpy as np

from .arith import DividerConfig, and_multiply, divide_trains
from .device import MtjDevice, SwitchCurve, current_for_probability, default_amplitude_curve
from .errors import (CycleError, DuplicateVariableError, MissingParentError, NetworkError,
                     ProbabilityRangeError, QueryError, TableSizeError, ZeroEvidenceError)
from .pulse import (BnVariable, DacSpec, NoiseModel, PulseNetwork, PulseTrain, dac_quantize,
                    parent_keys, table_index)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Cpt:
    parent_order: tuple[str, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "parent_order", tuple(self.parent_order))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if len(self.probs) != 2 ** len(self.parent_order):
            raise TableSizeError(
                f"CPT over {len(self.parent_order)} parents needs {2 ** len(self.parent_order)} entries, "
                f"got {len(self.probs)}")
        for p in self.probs:
            if not (np.isfinite(p) and 0.0 <= p <= 1.0):
                raise ProbabilityRangeError(f"CPT probability {p} outside [0, 1]")

    @property
    def table(self) -> dict[tuple[int, ...], float]:
        return dict(zip(parent_keys(len(self.parent_order)), self.probs))

    def p_true(self, parent_bits: tuple[int, ...]) -> float:
        return self.probs[table_index(parent_bits)]


@dataclass(frozen=True)
class BayesNet:
    name: str
    cpts: Mapping[str, Cpt]
    order: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "order", _toposort(self.cpts))

    @property
    def variables(self) -> tuple[str, ...]:
        return self.order

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [(p, v) for v in self.order for p in self.cpts[v].parent_order]

    def parents(self, name: str) -> tuple[str, ...]:
        return self.cpts[name].parent_order

    def with_probs(self, probs: Mapping[str, tuple[float, ...]], name: str | None = None) -> "BayesNet":
        cpts = {v: Cpt(self.cpts[v].parent_order, probs.get(v, self.cpts[v].probs)) for v in self.order}
        return BayesNet(name or self.name, cpts)

    def to_document(self) -> dict:
        return {
            "name": self.name,
            "variables": [
                {"name": v, "parents": list(self.cpts[v].parent_order), "cpt": list(self.cpts[v].probs)}
                for v in self.order
            ],
        }


def _toposort(cpts: Mapping[str, Cpt]) -> tuple[str, ...]:
    for v, cpt in cpts.items():
        for p in cpt.parent_order:
            if p not in cpts:
                raise MissingParentError(f"{v}: parent {p!r} is not defined")
        if len(set(cpt.parent_order)) != len(cpt.parent_order):
            raise NetworkError(f"{v}: repeated parent")
    indeg = {v: len(c.parent_order) for v, c in cpts.items()}
    children = {v: [] for v in cpts}
    for v, c in cpts.items():
        for p in c.parent_order:
            children[p].append(v)
    ready = sorted(v for v, d in indeg.items() if d == 0)
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
        ready.sort()
    if len(order) != len(cpts):
        stuck = sorted(v for v, d in indeg.items() if d > 0)
        raise CycleError(f"network has a directed cycle through {stuck}")
    return tuple(order)


def load_network(document: Mapping | str | Path | None = None) -> BayesNet:
    """Parse and validate a network document, a path to one, or the bundled default."""
    if document is None:
        document = json.loads(resources.files("sotbayes.data").joinpath("sprinkler.json").read_text())
    elif isinstance(document, (str, Path)):
        document = json.loads(Path(document).read_text())
    if "variables" not in document:
        raise NetworkError("network document has no 'variables' list")
    cpts: dict[str, Cpt] = {}
    for entry in document["variables"]:
        name = entry["name"]
        if name in cpts:
            raise DuplicateVariableError(f"variable {name!r} defined twice")
        cpts[name] = Cpt(tuple(entry.get("parents", ())), tuple(entry["cpt"]))
    return BayesNet(document.get("name", "network"), cpts)


def default_network() -> BayesNet:
    return load_network(None)


@dataclass(frozen=True)
class Query:
    target: str
    evidence: Mapping[str, int] = field(default_factory=dict)

    def validate(self, net: BayesNet) -> None:
        if self.target not in net.cpts:
            raise QueryError(f"unknown target {self.target!r}")
        for k, val in self.evidence.items():
            if k not in net.cpts:
                raise QueryError(f"unknown evidence variable {k!r}")
            if val not in (0, 1):
                raise QueryError(f"evidence {k}={val!r} is not binary")
        if self.target in self.evidence:
            raise QueryError("target variable cannot also be evidence")


def joint_probability(net: BayesNet, assignment: Mapping[str, int]) -> float:
    p = 1.0
    for v in net.order:
        cpt = net.cpts[v]
        pt = cpt.p_true(tuple(assignment[u] for u in cpt.parent_order))
        p *= pt if assignment[v] else 1.0 - pt
    return p


def exact_infer(net: BayesNet, target: str | Query, evidence: Mapping[str, int] | None = None) -> float:
    """P(target = 1 | evidence) by summing the factored joint over all states."""
    q = target if isinstance(target, Query) else Query(target, dict(evidence or {}))
    q.validate(net)
    num = den = 0.0
    for bits in product((0, 1), repeat=len(net.order)):
        a = dict(zip(net.order, bits))
        if any(a[k] != val for k, val in q.evidence.items()):
            continue
        pj = joint_probability(net, a)
        den += pj
        if a[q.target]:
            num += pj
    if den == 0.0:
        raise ZeroEvidenceError(f"evidence {dict(q.evidence)} has zero probability")
    return num / den


# -- compilation -----------------------------------------------------------

@dataclass
class CompileEntry:
    variable: str
    parents: tuple[int, ...]
    p_requested: float
    current_ma: float | None
    p_realized: float
    clamped: bool
    disabled: bool


@dataclass
class CompiledNetwork:
    pulse_net: PulseNetwork
    entries: list[CompileEntry]
    realized: BayesNet  # oracle over the probabilities the hardware actually produces

    @property
    def clamped(self) -> list[CompileEntry]:
        return [e for e in self.entries if e.clamped]

    def report(self) -> list[dict]:
        return [
            {"variable": e.variable, "parents": list(e.parents), "p_requested": e.p_requested,
             "current_ma": e.current_ma, "p_realized": e.p_realized, "clamped": e.clamped,
             "disabled": e.disabled}
            for e in self.entries
        ]


def program_current(p: float, curve: SwitchCurve, dac: DacSpec,
                    zero_disables_source: bool = True) -> tuple[float | None, bool, bool]:
    """Map a CPT probability to a DAC current.

    Returns (current or None, clamped, disabled). A probability of exactly 0
    leaves the source unfitted when ``zero_disables_source``; otherwise it is
    clamped to the DAC floor like any other unreachable value.
    """
    if zero_disables_source and p <= 0.0:
        return None, False, True
    lo = float(curve.probability(dac.i_min))
    hi = float(curve.probability(dac.i_max))
    pc = min(max(p, lo), hi)
    i = dac_quantize(current_for_probability(pc, curve), dac)
    return i, pc != p, False


def compile_to_pulse_network(net: BayesNet, curve: SwitchCurve | None = None, dac: DacSpec | None = None,
                             noise: NoiseModel | None = None, *, zero_disables_source: bool = True,
                             device_factory=None) -> CompiledNetwork:
    curve = curve or default_amplitude_curve()
    dac = dac or DacSpec()
    noise = noise or NoiseModel()
    make_device = device_factory or (lambda: MtjDevice(curve=curve))
    built: dict[str, BnVariable] = {}
    entries: list[CompileEntry] = []
    realized: dict[str, tuple[float, ...]] = {}
    for v in net.order:
        cpt = net.cpts[v]
        table, rp = {}, []
        for key, p in cpt.table.items():
            i, clamped, disabled = program_current(p, curve, dac, zero_disables_source)
            p_real = 0.0 if i is None else float(curve.probability(i))
            if clamped:
                log.warning("%s%s: P=%.4g not reachable by the DAC, realized as %.4g", v, key, p, p_real)
            table[key] = i
            rp.append(p_real)
            entries.append(CompileEntry(v, key, p, i, p_real, clamped, disabled))
        realized[v] = tuple(rp)
        built[v] = BnVariable(v, table, parents=[built[u] for u in cpt.parent_order], dac=dac, noise=noise,
                              device=make_device())
    return CompiledNetwork(PulseNetwork(built.values()), entries, net.with_probs(realized, net.name + "-realized"))


def realized_network(net: BayesNet, curve: SwitchCurve | None = None, dac: DacSpec | None = None,
                     zero_disables_source: bool = True) -> BayesNet:
    return compile_to_pulse_network(net, curve, dac, zero_disables_source=zero_disables_source).realized


# -- estimates from trains -------------------------------------------------

def estimate_marginal(trains: Mapping[str, PulseTrain], var: str) -> float:
    t = trains[var]
    if len(t) == 0:
        raise ValueError(f"train for {var!r} is empty")
    return t.rate


def estimate_conditional(trains: Mapping[str, PulseTrain], target: str, evidence_var: str,
                         method: str = "counter-ratio", divider: DividerConfig | None = None,
                         rng: np.random.Generator | int | None = None) -> float:
    """P(target = 1 | evidence_var = 1) from pulse trains."""
    t, e = trains[target], trains[evidence_var]
    joint = and_multiply(t, e)
    if e.ones == 0:
        raise ZeroEvidenceError(f"no pulses on evidence train {evidence_var!r}")
    if method == "counter-ratio":
        return joint.ones / e.ones
    if method == "hardware-divider":
        return divide_trains(joint, e, divider, rng).estimate
    raise ValueError(f"unknown method {method!r}")
