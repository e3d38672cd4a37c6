"""Deterministic discrete-event broadcast bus.

Every transmitted frame is serialized and its dominant runs are checked
against each sleeping node's wake-up filter; delivery is broadcast to all
normal-mode nodes. A bit-rate mismatch interval turns every transmission
attempt into a transmit error for the sender and receive errors for everyone
else, driving error confinement to bus-off. Frames occupy zero simulated bus
time except that failed attempts retry after one frame-duration, so error
floods advance time deterministically.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field

from . import ecu
from .ecu import EcuMode, RecoveryTrigger
from .frame import CanFrame, max_dominant_run_us, serialize_frame
from .wakeup import DEFAULT_FILTER

ATTACKER = "attacker"


class BusEventKind(enum.Enum):
    FRAME_TX = "frame_tx"
    TX_ERROR = "tx_error"
    RX_ERROR = "rx_error"
    WAKEUP_DETECTED = "wakeup_detected"
    BUS_OFF = "bus_off"
    RECOVERY = "recovery"


@dataclass(frozen=True)
class BusEvent:
    time_us: int
    kind: BusEventKind
    node: str
    frame: CanFrame = None


@dataclass(frozen=True)
class BusConfig:
    bitrate: int
    nodes: tuple
    attacker_bitrate: int = None
    wakeup_params: object = DEFAULT_FILTER

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if self.attacker_bitrate is None:
            object.__setattr__(self, "attacker_bitrate", self.bitrate)
        if self.bitrate <= 0 or self.attacker_bitrate <= 0:
            raise ValueError("bit rates must be positive")
        if not self.nodes:
            raise ValueError("bus needs at least one node")
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            raise ValueError("duplicate node names")
        seen = {}
        for node in self.nodes:
            for can_id in node.scheduled_ids():
                if can_id in seen:
                    raise ValueError(
                        f"schedule id {can_id:#x} used by both {seen[can_id]} and {node.name}"
                    )
                seen[can_id] = node.name


# --- timed directives (simulation plumbing alongside frame injections) ----

@dataclass(frozen=True)
class SetMismatch:
    active: bool


@dataclass(frozen=True)
class RecoverySweep:
    trigger: RecoveryTrigger = RecoveryTrigger.AUTOMATIC


@dataclass(frozen=True)
class IgnitionOn:
    pass


@dataclass(frozen=True)
class SetOverride:
    node: str
    message_id: int
    byte_index: int
    value: int = None  # None clears the override


def apply_bitrate_mismatch(intervals):
    """Directive entries activating the bit-rate mismatch over the intervals."""
    directives = []
    for start_us, end_us in intervals:
        if end_us <= start_us:
            raise ValueError("mismatch interval must have positive length")
        directives.append((start_us, SetMismatch(True)))
        directives.append((end_us, SetMismatch(False)))
    return tuple(directives)


@functools.lru_cache(maxsize=8192)
def _stream_props(can_id, dlc, data, bitrate):
    stream = serialize_frame(CanFrame(can_id, dlc, data), bitrate)
    return stream.duration_us, max_dominant_run_us(stream)


@dataclass
class RunResult:
    """Trace plus the state history a drain/recon analysis needs."""

    events: list
    mode_changes: list          # (time_us, node, EcuMode)
    activations: list           # (time_us, node, StandbyFunction, matched byte)
    initial_modes: dict
    final_states: dict
    duration_us: int

    def mode_segments(self, node):
        """Piecewise-constant mode history [(start_us, end_us, mode)] for a node."""
        segments = []
        t_prev = 0
        mode = self.initial_modes[node]
        for t, name, new_mode in self.mode_changes:
            if name != node:
                continue
            if t > t_prev:
                segments.append((t_prev, t, mode))
            t_prev, mode = t, new_mode
        if t_prev < self.duration_us or not segments:
            segments.append((t_prev, self.duration_us, mode))
        return segments

    def sleep_transitions(self, node):
        return [t for t, name, mode in self.mode_changes
                if name == node and mode is EcuMode.SLEEP]


class _Simulation:
    def __init__(self, config, injections, duration_us, directives):
        self.config = config
        self.duration_us = duration_us
        self.thresholds_us = [
            (n.wakeup_params or config.wakeup_params).gray_zone_threshold_us
            for n in config.nodes
        ]
        self.mismatch = False
        self.states = [ecu.initial_state(n) for n in config.nodes]
        self.pending = [None] * len(config.nodes)  # (frame, retry_time_us)
        self.events = []
        self.mode_changes = []
        self.activations = []

        prev = -1
        for t, _frame in injections:
            if t < prev:
                raise ValueError("injections must be time-sorted")
            if t > duration_us:
                raise ValueError(f"injection at {t}us beyond run duration {duration_us}us")
            prev = t
        self.injections = list(injections)
        self._inj_pos = 0
        self.directives = sorted(
            ((t, i, d) for i, (t, d) in enumerate(directives)),
            key=lambda item: (item[0], item[1]),
        )
        self._dir_pos = 0

    # -- state bookkeeping ------------------------------------------------

    def _record_mode(self, t, idx):
        self.mode_changes.append((t, self.config.nodes[idx].name, self.states[idx].mode))

    def _wake(self, t, idx):
        state = self.states[idx]
        was_sleeping = state.mode is EcuMode.SLEEP
        if ecu.on_wakeup_signal(state, self.config.nodes[idx], t) and was_sleeping:
            self.events.append(
                BusEvent(t, BusEventKind.WAKEUP_DETECTED, self.config.nodes[idx].name)
            )
            self._record_mode(t, idx)

    def _sleep_check(self, t, idx):
        if ecu.sleep_if_due(self.states[idx], self.config.nodes[idx], t):
            self.pending[idx] = None
            self._record_mode(t, idx)

    def _bus_off(self, t, idx):
        self.pending[idx] = None
        self.events.append(BusEvent(t, BusEventKind.BUS_OFF, self.config.nodes[idx].name))
        self._record_mode(t, idx)

    # -- transmission -----------------------------------------------------

    def _transmit(self, t, source_idx, frame, is_injection):
        if self.mismatch:
            self._transmit_mismatched(t, source_idx, frame, is_injection)
            return
        source = ATTACKER if is_injection else self.config.nodes[source_idx].name
        self.events.append(BusEvent(t, BusEventKind.FRAME_TX, source, frame))
        bitrate = self.config.attacker_bitrate if is_injection else self.config.bitrate
        _dur, max_run = _stream_props(frame.can_id, frame.dlc, frame.data, bitrate)
        for idx, node in enumerate(self.config.nodes):
            if not is_injection and idx == source_idx:
                ecu.on_tx_result(self.states[idx], ok=True)
                continue
            state = self.states[idx]
            wakes = max_run >= self.thresholds_us[idx]
            if state.mode is EcuMode.SLEEP:
                if wakes:
                    self._wake(t, idx)
            elif state.mode is EcuMode.NORMAL:
                ecu.on_rx_result(state, ok=True)
                # Only externally injected wake-up signals refresh the stay-
                # awake deadline; roster traffic does not keep the bus up.
                if is_injection and wakes:
                    ecu.on_wakeup_signal(state, node, t)
                for fn in node.functions:
                    if fn.matches_command(frame):
                        self.activations.append(
                            (t, node.name, fn.function, frame.data[fn.byte_index])
                        )

    def _transmit_mismatched(self, t, source_idx, frame, is_injection):
        if is_injection:
            # The attacker is error-immune at its own alien bit rate; its
            # dominant levels still wake sleeping transceivers and corrupt
            # reception for awake nodes.
            _dur, max_run = _stream_props(
                frame.can_id, frame.dlc, frame.data, self.config.attacker_bitrate
            )
            for idx in range(len(self.config.nodes)):
                state = self.states[idx]
                if state.mode is EcuMode.SLEEP and max_run >= self.thresholds_us[idx]:
                    self._wake(t, idx)
                elif state.mode is EcuMode.NORMAL:
                    ecu.on_rx_result(state, ok=False)
                    self.events.append(
                        BusEvent(t, BusEventKind.RX_ERROR, self.config.nodes[idx].name)
                    )
            return
        name = self.config.nodes[source_idx].name
        state = self.states[source_idx]
        self.events.append(BusEvent(t, BusEventKind.TX_ERROR, name))
        if ecu.on_tx_result(state, ok=False):
            self._bus_off(t, source_idx)
        else:
            dur, _ = _stream_props(
                frame.can_id, frame.dlc, frame.data, self.config.bitrate
            )
            self.pending[source_idx] = (frame, t + max(1, round(dur)))
        for idx in range(len(self.config.nodes)):
            if idx == source_idx:
                continue
            if self.states[idx].mode is EcuMode.NORMAL:
                ecu.on_rx_result(self.states[idx], ok=False)
                self.events.append(
                    BusEvent(t, BusEventKind.RX_ERROR, self.config.nodes[idx].name)
                )

    # -- directives ---------------------------------------------------------

    def _apply_directive(self, t, directive):
        if isinstance(directive, SetMismatch):
            self.mismatch = directive.active
        elif isinstance(directive, RecoverySweep):
            for idx, node in enumerate(self.config.nodes):
                if ecu.attempt_recovery(self.states[idx], node, directive.trigger):
                    self.events.append(BusEvent(t, BusEventKind.RECOVERY, node.name))
                    self._record_mode(t, idx)
        elif isinstance(directive, IgnitionOn):
            for idx, node in enumerate(self.config.nodes):
                state = self.states[idx]
                state.ignition_on = True
                if state.mode in (EcuMode.OFF, EcuMode.SLEEP):
                    state.mode = EcuMode.NORMAL
                    state.wake_deadline_us = None
                    state.next_tx_us = [t + s.period_us for s in node.schedule]
                    self._record_mode(t, idx)
        elif isinstance(directive, SetOverride):
            idx = self._node_index(directive.node)
            overrides = self.states[idx].overrides.setdefault(directive.message_id, {})
            if directive.value is None:
                overrides.pop(directive.byte_index, None)
            else:
                overrides[directive.byte_index] = directive.value
        else:
            raise TypeError(f"unknown directive {directive!r}")

    def _node_index(self, name):
        for idx, node in enumerate(self.config.nodes):
            if node.name == name:
                return idx
        raise KeyError(f"no node named {name}")

    # -- event loop ---------------------------------------------------------

    def _next_time(self):
        candidates = []
        if self._dir_pos < len(self.directives):
            candidates.append(self.directives[self._dir_pos][0])
        if self._inj_pos < len(self.injections):
            candidates.append(self.injections[self._inj_pos][0])
        for idx, state in enumerate(self.states):
            if state.mode is not EcuMode.NORMAL:
                continue
            if state.wake_deadline_us is not None and not state.ignition_on:
                candidates.append(state.wake_deadline_us)
            if self.pending[idx] is not None:
                candidates.append(self.pending[idx][1])
            else:
                due = [d for d in state.next_tx_us if d is not None]
                if due:
                    candidates.append(min(due))
        return min(candidates) if candidates else None

    def run(self):
        while True:
            t = self._next_time()
            if t is None or t > self.duration_us:
                break
            while self._dir_pos < len(self.directives) and self.directives[self._dir_pos][0] <= t:
                self._apply_directive(t, self.directives[self._dir_pos][2])
                self._dir_pos += 1
            while self._inj_pos < len(self.injections) and self.injections[self._inj_pos][0] <= t:
                _, frame = self.injections[self._inj_pos]
                self._inj_pos += 1
                self._transmit(t, None, frame, is_injection=True)
            for idx in range(len(self.states)):
                self._sleep_check(t, idx)
            # Same-instant transmissions run in CAN arbitration order.
            due = []
            for idx, state in enumerate(self.states):
                if state.mode is not EcuMode.NORMAL:
                    continue
                if self.pending[idx] is not None:
                    frame, retry_t = self.pending[idx]
                    if retry_t <= t:
                        due.append((frame.can_id, idx, "retry", None))
                    continue
                for si in ecu.due_transmissions(state, self.config.nodes[idx], t):
                    due.append((self.config.nodes[idx].schedule[si].can_id, idx, "sched", si))
            for _can_id, idx, kind, si in sorted(due, key=lambda d: (d[0], d[1])):
                state = self.states[idx]
                if state.mode is not EcuMode.NORMAL:
                    continue
                if kind == "retry":
                    frame, _ = self.pending[idx]
                    self.pending[idx] = None
                else:
                    frame = ecu.emit(state, self.config.nodes[idx], si)
                self._transmit(t, idx, frame, is_injection=False)
        return RunResult(
            events=self.events,
            mode_changes=self.mode_changes,
            activations=self.activations,
            initial_modes={n.name: n.initial_mode for n in self.config.nodes},
            final_states={
                n.name: self.states[i] for i, n in enumerate(self.config.nodes)
            },
            duration_us=self.duration_us,
        )


def run(config, injections, duration_us, directives=()):
    """Simulate the bus over [0, duration_us], returning the full RunResult.

    `injections` is the attacker's time-sorted (time_us, CanFrame) schedule;
    `directives` carries timed simulation controls (mismatch intervals,
    recovery sweeps, ignition-on, payload overrides).
    """
    if duration_us <= 0:
        raise ValueError("duration must be positive")
    return _Simulation(config, injections, duration_us, directives).run()


def distinct_id_count(events, window):
    """Number of unique frame IDs transmitted inside [start_us, end_us]."""
    if isinstance(events, RunResult):
        events = events.events
    start_us, end_us = window
    if end_us < start_us:
        raise ValueError("window end before start")
    return len({
        e.frame.can_id
        for e in events
        if e.kind is BusEventKind.FRAME_TX and start_us <= e.time_us <= end_us
    })
