"""Battery drain model: operation times, amplification, and SoC integration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ecu
from .bus import RunResult

US_PER_S = 1_000_000
S_PER_HOUR = 3600.0


@dataclass(frozen=True)
class BatteryConfig:
    """Capacity, usable SoC window, and the discharge-law parameters.

    The usable window runs from the parked SoC down to the cold-start floor.
    peukert_exponent 1.0 is the ideal battery; larger exponents shrink the
    effective capacity as the discharge current rises past the rated current
    (usable capacity over `rated_discharge_hours`).
    """

    capacity_ah: float = 45.0
    soc_start: float = 0.70
    soc_min_start: float = 0.50
    parasitic_threshold_a: float = 0.030
    peukert_exponent: float = 1.0
    rated_discharge_hours: float = 20.0

    def __post_init__(self):
        if not 0 <= self.soc_min_start < self.soc_start <= 1:
            raise ValueError("need 0 <= soc_min_start < soc_start <= 1")
        if self.capacity_ah <= 0:
            raise ValueError("capacity must be positive")
        if self.peukert_exponent < 1:
            raise ValueError("peukert exponent must be >= 1")
        if self.rated_discharge_hours <= 0:
            raise ValueError("rated discharge hours must be positive")

    @property
    def usable_capacity_ah(self):
        return self.capacity_ah * (self.soc_start - self.soc_min_start)


@dataclass
class DrainReport:
    label: str
    mean_current_a: float
    amplification: float
    operation_time_ideal_h: float
    operation_time_peukert_h: float
    soc_timeline: list            # (hours, soc) samples
    immobilized_at_h: float = None
    exceeds_parasitic_threshold: bool = False

    def to_dict(self):
        return {
            "label": self.label,
            "mean_current_a": self.mean_current_a,
            "amplification": self.amplification,
            "operation_time_ideal_h": self.operation_time_ideal_h,
            "operation_time_peukert_h": self.operation_time_peukert_h,
            "soc_timeline": [[t, s] for t, s in self.soc_timeline],
            "immobilized_at_h": self.immobilized_at_h,
            "exceeds_parasitic_threshold": self.exceeds_parasitic_threshold,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            label=d["label"],
            mean_current_a=d["mean_current_a"],
            amplification=d["amplification"],
            operation_time_ideal_h=d["operation_time_ideal_h"],
            operation_time_peukert_h=d["operation_time_peukert_h"],
            soc_timeline=[tuple(p) for p in d["soc_timeline"]],
            immobilized_at_h=d["immobilized_at_h"],
            exceeds_parasitic_threshold=d["exceeds_parasitic_threshold"],
        )


def operation_time_ideal(cfg, current_a):
    """Hours until the usable SoC window is drained at a constant current."""
    if current_a <= 0:
        raise ValueError("current must be positive")
    return cfg.usable_capacity_ah / current_a


def amplification(current_a, baseline_a):
    """Drain amplification of an attack current over the no-attack baseline."""
    if baseline_a <= 0:
        raise ValueError("baseline current must be positive")
    return current_a / baseline_a


def operation_time_peukert(cfg, current_a):
    """Discharge-law-adjusted operation time in hours.

    Closed form H * (usable / (I * H))**k with H the rated discharge hours;
    equals the ideal time at k = 1, and falls below it only when the current
    exceeds the rated discharge current.
    """
    if current_a <= 0:
        raise ValueError("current must be positive")
    h = cfg.rated_discharge_hours
    return h * (cfg.usable_capacity_ah / (current_a * h)) ** cfg.peukert_exponent


# --- trace-driven integration ---------------------------------------------

def roster_current_segments(result, nodes, base_current_a=0.0, load_intervals=()):
    """Piecewise-constant total current [(start_s, amperes)] over a run.

    Sums each node's mode-dependent draw from the run's mode history, a fixed
    always-on base current, and any active function-load intervals
    ((start_us, end_us or None, amperes); an open end runs to the horizon).
    """
    if isinstance(result, RunResult):
        span_us = result.duration_us
        per_node = {n.name: result.mode_segments(n.name) for n in nodes}
    else:
        raise TypeError("expected a RunResult")
    edges = {0}
    for segments in per_node.values():
        for start, _end, _mode in segments:
            edges.add(start)
    for start_us, end_us, _amps in load_intervals:
        edges.add(start_us)
        if end_us is not None:
            edges.add(end_us)
    times = sorted(e for e in edges if 0 <= e <= span_us)

    node_cfg = {n.name: n for n in nodes}

    def mode_at(name, t):
        for start, end, mode in per_node[name]:
            if start <= t < end or (t == end == span_us):
                return mode
        return per_node[name][-1][2]

    segments = []
    for t in times:
        total = base_current_a
        for name, cfg in node_cfg.items():
            state = ecu.EcuState(mode=mode_at(name, t))
            total += ecu.current_draw(state, cfg)
        for start_us, end_us, amps in load_intervals:
            if start_us <= t and (end_us is None or t < end_us):
                total += amps
        segments.append((t / US_PER_S, total))
    return segments, span_us / US_PER_S


def mean_current(segments, span_s, window=None):
    """Exact time-weighted mean current over [start_s, end_s] (default: all)."""
    start_s, end_s = window if window is not None else (0.0, span_s)
    if end_s <= start_s:
        raise ValueError("window must have positive length")
    charge = 0.0
    for i, (t, amps) in enumerate(segments):
        seg_end = segments[i + 1][0] if i + 1 < len(segments) else max(span_s, end_s)
        lo = max(t, start_s)
        hi = min(seg_end, end_s)
        if hi > lo:
            charge += amps * (hi - lo)
    return charge / (end_s - start_s)


def integrate_drain(segments, cfg, dt_s=1.0, horizon_s=None, label="",
                    baseline_a=None, max_timeline_points=1000):
    """Step the SoC down a piecewise-constant current profile.

    The profile's last value holds beyond its span. SoC decreases by
    I*dt/capacity each step and never increases (nothing charges while
    parked); `immobilized_at_h` is the first step at or below the cold-start
    floor, None if the horizon ends above it.
    """
    if dt_s <= 0:
        raise ValueError("dt must be positive")
    if not segments:
        raise ValueError("empty current profile")
    if horizon_s is None:
        horizon_s = max(segments[-1][0], dt_s)
    n_steps = max(1, int(round(horizon_s / dt_s)))
    t = np.arange(n_steps, dtype=np.float64) * dt_s
    starts = np.array([s for s, _ in segments])
    amps = np.array([a for _, a in segments])
    idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(amps) - 1)
    current = amps[idx]

    drained_ah = np.cumsum(current) * (dt_s / S_PER_HOUR)
    soc = cfg.soc_start - drained_ah / cfg.capacity_ah
    # Tolerance absorbs cumsum round-off when the crossing lands exactly on a
    # step boundary; keeps the reported time within one dt of the true one.
    below = np.nonzero(soc <= cfg.soc_min_start + 1e-12)[0]
    immobilized_at_h = float((below[0] + 1) * dt_s / S_PER_HOUR) if below.size else None

    mean_a = float(drained_ah[-1] / (n_steps * dt_s / S_PER_HOUR))
    ideal_h = operation_time_ideal(cfg, mean_a) if mean_a > 0 else float("inf")
    adjusted_h = operation_time_peukert(cfg, mean_a) if mean_a > 0 else float("inf")
    stride = max(1, n_steps // max_timeline_points)
    sample_idx = np.arange(0, n_steps, stride)
    timeline = [
        (float((k + 1) * dt_s / S_PER_HOUR), float(max(soc[k], 0.0)))
        for k in sample_idx
    ]
    return DrainReport(
        label=label,
        mean_current_a=mean_a,
        amplification=amplification(mean_a, baseline_a) if baseline_a else 1.0,
        operation_time_ideal_h=ideal_h,
        operation_time_peukert_h=adjusted_h,
        soc_timeline=timeline,
        immobilized_at_h=immobilized_at_h,
        exceeds_parasitic_threshold=mean_a > cfg.parasitic_threshold_a,
    )
