"""Measured switching curves of the SOT device and the three-terminal MTJ.

Two separable empirical models are calibrated from the endpoint anchors of
the measured characteristics:

* logistic in pulse amplitude (mA), P = 1 / (1 + exp(-(i - i50) / s))
* Weibull in pulse width (ms), P = 1 - exp(-(t / tau) ** beta)

Measured 0% / 100% anchors map to 1% / 99% since the logit is singular at
the ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import OutOfRangeError, ProtocolError

AMPLITUDE_ANCHORS = ((0.47, 0.01), (0.54, 0.99))
WIDTH_ANCHORS = ((1.0, 0.06), (50.0, 0.98))


class CurveModel(str, Enum):
    LOGISTIC_AMPLITUDE = "logistic-amplitude"
    WEIBULL_WIDTH = "weibull-width"


@dataclass(frozen=True)
class SwitchCurve:
    model: CurveModel
    i50: float = float("nan")
    slope_s: float = float("nan")
    tau: float = float("nan")
    beta: float = float("nan")
    valid_range: tuple[float, float] = (0.44, 0.58)

    def __post_init__(self):
        object.__setattr__(self, "model", CurveModel(self.model))
        lo, hi = self.valid_range
        if not lo < hi:
            raise ValueError(f"empty valid_range {self.valid_range}")
        if self.model is CurveModel.LOGISTIC_AMPLITUDE:
            if not (math.isfinite(self.i50) and self.slope_s > 0):
                raise ValueError("logistic curve needs finite i50 and slope_s > 0")
        else:
            if not (self.tau > 0 and self.beta > 0):
                raise ValueError("weibull curve needs tau > 0 and beta > 0")
            if lo <= 0:
                raise ValueError("width range must be positive")

    @classmethod
    def logistic_from_anchors(cls, lo=AMPLITUDE_ANCHORS[0], hi=AMPLITUDE_ANCHORS[1],
                              valid_range=(0.44, 0.58)) -> "SwitchCurve":
        (i1, p1), (i2, p2) = lo, hi
        l1, l2 = _logit(p1), _logit(p2)
        slope = (i2 - i1) / (l2 - l1)
        i50 = i1 - slope * l1
        return cls(CurveModel.LOGISTIC_AMPLITUDE, i50=i50, slope_s=slope, valid_range=valid_range)

    @classmethod
    def weibull_from_anchors(cls, lo=WIDTH_ANCHORS[0], hi=WIDTH_ANCHORS[1],
                             valid_range=(0.1, 100.0)) -> "SwitchCurve":
        (t1, p1), (t2, p2) = lo, hi
        # -ln(1-P) = (t/tau)^beta, two anchors fix beta then tau
        beta = math.log(math.log1p(-p2) / math.log1p(-p1)) / math.log(t2 / t1)
        tau = t1 / (-math.log1p(-p1)) ** (1.0 / beta)
        return cls(CurveModel.WEIBULL_WIDTH, tau=tau, beta=beta, valid_range=valid_range)

    @classmethod
    def from_dict(cls, d: dict, model: CurveModel | str) -> "SwitchCurve":
        model = CurveModel(model)
        d = dict(d)
        rng = tuple(d.pop("valid_range")) if "valid_range" in d else None
        kw = {} if rng is None else {"valid_range": rng}
        if "anchors" in d:
            a, b = (tuple(x) for x in d.pop("anchors"))
            if model is CurveModel.LOGISTIC_AMPLITUDE:
                return cls.logistic_from_anchors(a, b, **kw)
            return cls.weibull_from_anchors(a, b, **kw)
        return cls(model, **d, **kw)

    def to_dict(self) -> dict:
        d = {"valid_range": list(self.valid_range)}
        if self.model is CurveModel.LOGISTIC_AMPLITUDE:
            d.update(i50=self.i50, slope_s=self.slope_s)
        else:
            d.update(tau=self.tau, beta=self.beta)
        return d

    def probability(self, x):
        if self.model is CurveModel.LOGISTIC_AMPLITUDE:
            return p_switch_amplitude(x, self)
        return p_switch_width(x, self)

    @property
    def p_min(self) -> float:
        return float(self.probability(self.valid_range[0]))

    @property
    def p_max(self) -> float:
        return float(self.probability(self.valid_range[1]))


def default_amplitude_curve() -> SwitchCurve:
    return SwitchCurve.logistic_from_anchors()


def default_width_curve() -> SwitchCurve:
    return SwitchCurve.weibull_from_anchors()


def _logit(p):
    return math.log(p / (1.0 - p))


def clamp_amplitude(i, curve: SwitchCurve):
    """Clip ``i`` to the curve's valid range; returns (clipped, was_clamped)."""
    i = np.asarray(i, dtype=float)
    if not np.all(np.isfinite(i)):
        raise ValueError("non-finite current")
    lo, hi = curve.valid_range
    clipped = np.clip(i, lo, hi)
    return clipped, clipped != i


def p_switch_amplitude(i, curve: SwitchCurve, return_flag: bool = False):
    """Switching probability for a drive current ``i`` in mA.

    Currents outside the valid range are clamped to it; pass
    ``return_flag=True`` to also get the clamp mask.
    """
    if curve.model is not CurveModel.LOGISTIC_AMPLITUDE:
        raise ValueError("amplitude probability needs a logistic-amplitude curve")
    ic, flag = clamp_amplitude(i, curve)
    z = (ic - curve.i50) / curve.slope_s
    p = 1.0 / (1.0 + np.exp(-z))
    if p.ndim == 0:
        p, flag = float(p), bool(flag)
    return (p, flag) if return_flag else p


def p_switch_width(t, curve: SwitchCurve):
    """Switching probability for a pulse of width ``t`` ms."""
    if curve.model is not CurveModel.WEIBULL_WIDTH:
        raise ValueError("width probability needs a weibull-width curve")
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)) or np.any(t <= 0):
        raise ValueError("pulse width must be positive and finite")
    p = -np.expm1(-((t / curve.tau) ** curve.beta))
    return float(p) if p.ndim == 0 else p


def current_for_probability(p, curve: SwitchCurve):
    """Drive current (mA) that yields switching probability ``p``."""
    if curve.model is not CurveModel.LOGISTIC_AMPLITUDE:
        raise ValueError("inverse lookup needs a logistic-amplitude curve")
    lo, hi = curve.p_min, curve.p_max
    arr = np.asarray(p, dtype=float)
    bad = ~np.isfinite(arr) | (arr < lo) | (arr > hi)
    if np.any(bad):
        raise OutOfRangeError(float(arr[bad].flat[0]) if arr.ndim else float(arr), lo, hi)
    i = curve.i50 + curve.slope_s * np.log(arr / (1.0 - arr))
    return float(i) if i.ndim == 0 else i


class MtjState(str, Enum):
    P = "P"
    AP = "AP"


@dataclass
class MtjDevice:
    """Three-terminal MTJ: SOT write path plus a non-destructive TMR read.

    The reset (initial) state is P.
    """

    curve: SwitchCurve = field(default_factory=default_amplitude_curve)
    state: MtjState = MtjState.P
    r_p: float = 10e3
    r_ap: float = 25e3
    r_ref: float = 16e3

    def __post_init__(self):
        if not self.r_p < self.r_ref < self.r_ap:
            raise ValueError("need r_p < r_ref < r_ap for a separable read")
        if not 2.0 <= self.r_ap / self.r_p <= 3.0:
            raise ValueError(f"r_ap/r_p = {self.r_ap / self.r_p:.3g} outside [2, 3]")

    @property
    def resistance(self) -> float:
        return self.r_ap if self.state is MtjState.AP else self.r_p


def attempt_write(dev: MtjDevice, x, rng: np.random.Generator) -> bool:
    """One stochastic write with drive ``x`` (mA, or ms for a width curve).

    ``x=None`` means the current source is disabled: a uniform is still
    drawn so the random stream advances exactly once per write.
    """
    if dev.state is not MtjState.P:
        raise ProtocolError("write attempted on a device that was not reset")
    p = 0.0 if x is None else dev.curve.probability(x)
    switched = bool(rng.random() < p)
    if switched:
        dev.state = MtjState.AP
    return switched


def read(dev: MtjDevice) -> int:
    return int(dev.resistance > dev.r_ref)


def reset(dev: MtjDevice) -> None:
    dev.state = MtjState.P
