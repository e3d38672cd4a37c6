"""Sleeping-transceiver wake-up filter over timed bus levels.

A dominant level lasting at least the filter time wakes a sleeping
transceiver; pulses shorter than the lower filter bound are ignored. The
standard leaves the in-between zone implementation-defined, so the filter
resolves it with a single deterministic threshold (default: the upper bound,
the hardest case for an attacker).
"""

from __future__ import annotations

from dataclasses import dataclass

from .frame import max_dominant_run_us, serialize_frame


@dataclass(frozen=True)
class WakeupFilterParams:
    """Pulse-duration window of the wake-up filter, in microseconds."""

    t_filter_min_us: float = 0.5
    t_filter_max_us: float = 5.0
    gray_zone_threshold_us: float = 5.0

    def __post_init__(self):
        if not 0 < self.t_filter_min_us <= self.gray_zone_threshold_us <= self.t_filter_max_us:
            raise ValueError(
                "filter window must satisfy 0 < t_filter_min <= gray_zone_threshold"
                f" <= t_filter_max, got ({self.t_filter_min_us}, "
                f"{self.gray_zone_threshold_us}, {self.t_filter_max_us})"
            )


DEFAULT_FILTER = WakeupFilterParams()


def detect_wakeup(stream, params=DEFAULT_FILTER):
    """True iff some maximal dominant run lasts at least the threshold.

    Maximal runs are recessive-separated by construction; sub-threshold runs
    never accumulate across the separating recessive level.
    """
    return max_dominant_run_us(stream) >= params.gray_zone_threshold_us


def frame_wakes_bus(frame, bitrate, params=DEFAULT_FILTER):
    """Whether transmitting this frame at the given rate wakes sleeping nodes."""
    return detect_wakeup(serialize_frame(frame, bitrate), params)
