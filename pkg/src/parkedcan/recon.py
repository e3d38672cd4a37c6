"""Driver-context trace analysis: ignition split, free-run masks, control candidates.

Given a log spanning the parked (awakened) regime and the ignition-on regime,
the analysis finds the ignition boundary from the jump in distinct message
IDs, marks the bit positions that change on practically every transmission
(counters/checksums), and then flags the remaining positions whose values
deviated from their resting baseline just before the ignition came on. Those
temporary changes are the driver's unlock / power-mode / trunk actions, and
their messages are the control messages worth injecting.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .bus import BusEventKind, RunResult


@dataclass(frozen=True)
class TraceRecord:
    time_us: int
    can_id: int
    dlc: int
    data: bytes

    def __post_init__(self):
        object.__setattr__(self, "data", bytes(self.data))


def records_from_events(events):
    """Project a bus trace onto plain timestamped frame records."""
    if isinstance(events, RunResult):
        events = events.events
    return [
        TraceRecord(e.time_us, e.frame.can_id, e.frame.dlc, e.frame.data)
        for e in events
        if e.kind is BusEventKind.FRAME_TX
    ]


@dataclass
class SplitResult:
    parked: list
    running: list
    boundary_us: int
    single_regime: bool
    window_us: int


@dataclass(frozen=True)
class Candidate:
    """A control-message lead: one byte that deviated just before ignition-on."""

    can_id: int
    byte_index: int
    bits: tuple
    baseline_value: int
    event_value: int
    event_time_us: int
    reverted: bool


@dataclass
class ReconReport:
    awakened_ids: frozenset      # IDs transmitted while parked but awake
    ignition_on_ids: frozenset   # IDs transmitted with the ignition on
    free_run_masks: dict         # id -> frozenset[(byte, bit)] always-changing
    skipped_ids: tuple           # too few parked records to judge
    boundary_us: int
    single_regime: bool
    candidates: list = field(default_factory=list)

    @property
    def awakened_ratio_pct(self):
        return awakened_ratio(self.awakened_ids, self.ignition_on_ids)


def awakened_ratio(awakened_ids, ignition_on_ids):
    """Percentage of ignition-on message IDs also seen while parked-awake."""
    if not ignition_on_ids:
        raise ValueError("ignition-on ID set must be non-empty")
    return 100.0 * len(awakened_ids) / len(ignition_on_ids)


def split_ignition(records, window_us=1_000_000, jump_factor=1.5, exclude_ids=frozenset()):
    """Locate the ignition boundary from the jump in distinct IDs per window.

    The distinct-ID count of each analysis window is compared with the running
    mean of the windows before it; the boundary is the start of the first
    window at or beyond `jump_factor` times that baseline. A trace with no
    such jump is reported as single-regime. `exclude_ids` drops the analyst's
    own injected IDs.
    """
    if window_us <= 0:
        raise ValueError("window must be positive")
    records = [r for r in records if r.can_id not in exclude_ids]
    if not records:
        return SplitResult([], [], None, True, window_us)
    t0 = records[0].time_us
    window_ids = defaultdict(set)
    for rec in records:
        window_ids[(rec.time_us - t0) // window_us].add(rec.can_id)
    counts = [len(window_ids.get(k, ())) for k in range(max(window_ids) + 1)]

    boundary_us = None
    seen = 0
    total = 0
    for k, count in enumerate(counts):
        if k >= 1 and total:
            if count >= jump_factor * (total / seen):
                boundary_us = t0 + k * window_us
                break
        seen += 1
        total += count
    if boundary_us is None:
        return SplitResult(list(records), [], None, True, window_us)
    parked = [r for r in records if r.time_us < boundary_us]
    running = [r for r in records if r.time_us >= boundary_us]
    return SplitResult(parked, running, boundary_us, False, window_us)


def _records_by_id(records):
    by_id = defaultdict(list)
    for rec in records:
        by_id[rec.can_id].append(rec)
    return by_id


def compute_free_run_masks(records_by_id, change_fraction=0.5):
    """Bit positions that flip in at least `change_fraction` of record pairs.

    Returns (masks id -> frozenset[(byte, bit)], ids skipped for having fewer
    than two records).
    """
    if not 0 < change_fraction <= 1:
        raise ValueError("change_fraction must be in (0, 1]")
    masks = {}
    skipped = []
    for can_id in sorted(records_by_id):
        recs = records_by_id[can_id]
        if len(recs) < 2:
            skipped.append(can_id)
            continue
        width = max(r.dlc for r in recs)
        flips = [0] * (width * 8)
        pairs = 0
        prev = int.from_bytes(recs[0].data.ljust(width, b"\0"), "big")
        for rec in recs[1:]:
            cur = int.from_bytes(rec.data.ljust(width, b"\0"), "big")
            diff = prev ^ cur
            while diff:
                low = diff & -diff
                flips[low.bit_length() - 1] += 1
                diff ^= low
            prev = cur
            pairs += 1
        positions = set()
        for pos, n in enumerate(flips):
            if n and n >= change_fraction * pairs:
                # flip counters index from the big-endian integer's LSB
                positions.add((width - 1 - pos // 8, pos % 8))
        masks[can_id] = frozenset(positions)
    return masks, tuple(skipped)


def find_control_candidates(parked_records, free_run_masks, boundary_us,
                            event_window_us=5_000_000):
    """Bytes outside the free-run mask that deviated inside the event window.

    The resting baseline of each position is taken from the records before
    the window. Candidates are ranked by how close the deviation was to the
    ignition boundary, then by how few bits changed.
    """
    if boundary_us is None:
        return []
    window_start = boundary_us - event_window_us
    candidates = []
    for can_id, recs in sorted(_records_by_id(parked_records).items()):
        pre = [r for r in recs if r.time_us < window_start]
        during = [r for r in recs if window_start <= r.time_us < boundary_us]
        if not pre or not during:
            continue
        masked = free_run_masks.get(can_id, frozenset())
        baseline = pre[-1].data
        deviated = {}  # byte_index -> (first deviating record, changed bits)
        for rec in during:
            for byte_index in range(min(len(baseline), rec.dlc)):
                diff = rec.data[byte_index] ^ baseline[byte_index]
                if not diff:
                    continue
                bits = tuple(
                    b for b in range(8)
                    if diff >> b & 1 and (byte_index, b) not in masked
                )
                if bits and byte_index not in deviated:
                    deviated[byte_index] = (rec, bits)
        for byte_index, (rec, bits) in sorted(deviated.items()):
            reverted = during[-1].data[byte_index] == baseline[byte_index]
            candidates.append(Candidate(
                can_id=can_id,
                byte_index=byte_index,
                bits=bits,
                baseline_value=baseline[byte_index],
                event_value=rec.data[byte_index],
                event_time_us=rec.time_us,
                reverted=reverted,
            ))
    candidates.sort(key=lambda c: (boundary_us - c.event_time_us, len(c.bits),
                                   c.can_id, c.byte_index))
    return candidates


def analyze(records, window_us=1_000_000, jump_factor=1.5, change_fraction=0.5,
            event_window_us=5_000_000, exclude_ids=frozenset()):
    """Full pipeline: split regimes, compute masks, extract ranked candidates."""
    split = split_ignition(records, window_us, jump_factor, exclude_ids)
    parked_by_id = _records_by_id(split.parked)
    masks, skipped = compute_free_run_masks(parked_by_id, change_fraction)
    candidates = []
    if not split.single_regime:
        candidates = find_control_candidates(
            split.parked, masks, split.boundary_us, event_window_us
        )
    return ReconReport(
        awakened_ids=frozenset(parked_by_id),
        ignition_on_ids=frozenset(r.can_id for r in split.running),
        free_run_masks=masks,
        skipped_ids=skipped,
        boundary_us=split.boundary_us,
        single_regime=split.single_regime,
        candidates=candidates,
    )


def intersect_free_run_masks(*sessions):
    """Free-run mask agreed on by several parked-regime sessions."""
    if not sessions:
        return {}
    common_ids = set(sessions[0])
    for s in sessions[1:]:
        common_ids &= set(s)
    return {
        can_id: frozenset.intersection(*(s[can_id] for s in sessions))
        for can_id in sorted(common_ids)
    }
