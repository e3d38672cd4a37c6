"""Per-ECU power-state machine, schedules, error confinement, and current draw."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .frame import CanFrame

#: Error-counter steps of CAN error confinement; the transmit counter forces
#: bus-off once it exceeds 255, so exactly 32 consecutive tx errors from 0.
TEC_ERROR_STEP = 8
REC_ERROR_STEP = 1
BUS_OFF_THRESHOLD = 255


class EcuMode(enum.Enum):
    OFF = "off"
    SLEEP = "sleep"
    NORMAL = "normal"
    BUS_OFF = "bus_off"


class Terminal(enum.Enum):
    T15 = "T15"  # switched with ignition: fully off while parked
    T30 = "T30"  # permanently powered: sleeps while parked


class RecoveryPolicy(enum.Enum):
    AUTO_RECOVER = "auto"
    NEVER_RECOVER = "never"
    MANUAL_RESET_ONLY = "manual"


class RecoveryTrigger(enum.Enum):
    AUTOMATIC = "automatic"
    USER_REQUEST = "user_request"


class StandbyFunction(enum.Enum):
    PKES = "pkes"
    RKE = "rke"
    POWER_MODE = "power_mode"
    DOOR_CONTROL = "door_control"
    TRUNK_CONTROL = "trunk_control"


@dataclass(frozen=True)
class MessageSpec:
    """One periodic message: constant baseline except the free-running bytes.

    Free-running bytes (counters/checksums) complement-toggle on every
    emission, so each of their bit positions changes on every transmission.
    """

    can_id: int
    period_us: int
    dlc: int = 8
    baseline: bytes = bytes(8)
    free_run_bytes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "baseline", bytes(self.baseline))
        object.__setattr__(self, "free_run_bytes", tuple(self.free_run_bytes))
        if not 0 <= self.can_id < (1 << 11):
            raise ValueError(f"message id {self.can_id:#x} outside 11-bit range")
        if self.period_us <= 0:
            raise ValueError(f"message {self.can_id:#x}: period must be positive")
        if len(self.baseline) != self.dlc:
            raise ValueError(f"message {self.can_id:#x}: baseline length != dlc")
        for b in self.free_run_bytes:
            if not 0 <= b < self.dlc:
                raise ValueError(f"message {self.can_id:#x}: free-run byte {b} outside payload")

    def free_run_positions(self):
        return frozenset((b, bit) for b in self.free_run_bytes for bit in range(8))

    def payload(self, emission_index, overrides=None):
        buf = bytearray(self.baseline)
        if emission_index % 2:
            for b in self.free_run_bytes:
                buf[b] ^= 0xFF
        if overrides:
            for byte_index, value in overrides.items():
                buf[byte_index] = value
        return bytes(buf)


@dataclass(frozen=True)
class FunctionSpec:
    """A standby function: its status message byte and accepted command values.

    The function's state is carried by `byte_index` of `message_id`; a frame
    with that id whose masked byte matches `active_value` (or one of the extra
    command values) commands the function.
    """

    function: StandbyFunction
    message_id: int
    byte_index: int
    idle_value: int
    active_value: int
    mask: int = 0xFF
    extra_command_values: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "extra_command_values", tuple(self.extra_command_values))
        if self.idle_value == self.active_value:
            raise ValueError(f"{self.function.value}: idle and active values must differ")
        if (self.idle_value ^ self.active_value) & self.mask == 0:
            raise ValueError(f"{self.function.value}: mask hides the idle/active difference")

    def command_values(self):
        return (self.active_value, *self.extra_command_values)

    def matches_command(self, frame: CanFrame):
        if frame.can_id != self.message_id or frame.dlc <= self.byte_index:
            return False
        observed = frame.data[self.byte_index] & self.mask
        return any(observed == (v & self.mask) for v in self.command_values())


@dataclass(frozen=True)
class EcuConfig:
    name: str
    terminal: Terminal
    t_wakeup_us: int = 2_000_000
    sleep_current_a: float = 80e-6
    normal_current_a: float = 5e-3
    schedule: tuple = ()
    functions: tuple = ()
    recovery_policy: RecoveryPolicy = RecoveryPolicy.AUTO_RECOVER
    standby_functions: frozenset = frozenset()
    wakeup_params: object = None  # per-transceiver filter; None: bus default

    def __post_init__(self):
        object.__setattr__(self, "schedule", tuple(self.schedule))
        object.__setattr__(self, "functions", tuple(self.functions))
        declared = frozenset(self.standby_functions) | {f.function for f in self.functions}
        object.__setattr__(self, "standby_functions", declared)
        if self.t_wakeup_us <= 0:
            raise ValueError(f"{self.name}: t_wakeup must be positive")
        if not self.sleep_current_a < self.normal_current_a:
            raise ValueError(f"{self.name}: sleep current must be below normal current")
        seen = set()
        for spec in self.schedule:
            if spec.can_id in seen:
                raise ValueError(f"{self.name}: duplicate schedule id {spec.can_id:#x}")
            seen.add(spec.can_id)
        for fn in self.functions:
            spec = self.message(fn.message_id)
            if spec is None:
                raise ValueError(
                    f"{self.name}: function {fn.function.value} references unknown"
                    f" message {fn.message_id:#x}"
                )
            if fn.byte_index >= spec.dlc:
                raise ValueError(f"{self.name}: function byte outside message payload")
            if fn.byte_index in spec.free_run_bytes:
                raise ValueError(f"{self.name}: function byte collides with free-run byte")

    def message(self, can_id):
        for spec in self.schedule:
            if spec.can_id == can_id:
                return spec
        return None

    def scheduled_ids(self):
        return tuple(spec.can_id for spec in self.schedule)

    @property
    def free_run_positions(self):
        """Always-changing (byte, bit) positions across this ECU's messages."""
        positions = set()
        for spec in self.schedule:
            positions |= spec.free_run_positions()
        return frozenset(positions)

    @property
    def initial_mode(self):
        return EcuMode.OFF if self.terminal is Terminal.T15 else EcuMode.SLEEP

    @property
    def wakeable(self):
        return self.terminal is Terminal.T30


@dataclass
class EcuState:
    mode: EcuMode
    tec: int = 0
    rec: int = 0
    wake_deadline_us: int = None
    next_tx_us: list = field(default_factory=list)
    emission_counts: list = field(default_factory=list)
    overrides: dict = field(default_factory=dict)
    ignition_on: bool = False


def initial_state(config):
    return EcuState(
        mode=config.initial_mode,
        next_tx_us=[None] * len(config.schedule),
        emission_counts=[0] * len(config.schedule),
    )


def _start_schedules(state, config, now_us):
    state.next_tx_us = [now_us + spec.period_us for spec in config.schedule]


def _halt_schedules(state, config):
    state.next_tx_us = [None] * len(config.schedule)


def on_wakeup_signal(state, config, now_us):
    """Apply a detected wake-up: sleepers go normal, normal extends its stay.

    Off ECUs cannot be bus-woken and bus-off ECUs are shut down; both ignore
    the signal. Returns True when the signal changed or refreshed the state.
    """
    if state.mode is EcuMode.SLEEP:
        state.mode = EcuMode.NORMAL
        state.wake_deadline_us = now_us + config.t_wakeup_us
        _start_schedules(state, config, now_us)
        return True
    if state.mode is EcuMode.NORMAL:
        if not state.ignition_on:
            state.wake_deadline_us = now_us + config.t_wakeup_us
        return True
    return False


def sleep_if_due(state, config, now_us):
    """Re-sleep a normal ECU whose wake deadline has passed. True if it slept."""
    if (
        state.mode is EcuMode.NORMAL
        and not state.ignition_on
        and state.wake_deadline_us is not None
        and now_us >= state.wake_deadline_us
    ):
        state.mode = EcuMode.SLEEP
        state.wake_deadline_us = None
        _halt_schedules(state, config)
        return True
    return False


def due_transmissions(state, config, now_us):
    """Schedule entries due at or before now, without advancing them."""
    if state.mode is not EcuMode.NORMAL:
        return []
    return [
        i for i, deadline in enumerate(state.next_tx_us)
        if deadline is not None and deadline <= now_us
    ]


def emit(state, config, sched_index):
    """Build the frame for one due schedule entry and advance its deadline."""
    spec = config.schedule[sched_index]
    payload = spec.payload(
        state.emission_counts[sched_index], state.overrides.get(spec.can_id)
    )
    state.emission_counts[sched_index] += 1
    state.next_tx_us[sched_index] += spec.period_us
    return CanFrame(spec.can_id, spec.dlc, payload)


def tick(state, config, now_us):
    """Advance the ECU to `now_us`, returning frames that became due.

    Events are replayed in deadline order; a frame due at or after the wake
    deadline is not sent (re-sleep wins the tie). Same-instant frames are
    ordered by CAN id priority.
    """
    frames = []
    while state.mode is EcuMode.NORMAL:
        due = due_transmissions(state, config, now_us)
        if not due:
            sleep_if_due(state, config, now_us)
            break
        nxt = min(due, key=lambda i: (state.next_tx_us[i], config.schedule[i].can_id))
        deadline = state.next_tx_us[nxt]
        wake_dl = None if state.ignition_on else state.wake_deadline_us
        if wake_dl is not None and wake_dl <= min(deadline, now_us):
            sleep_if_due(state, config, now_us)
            break
        frames.append(emit(state, config, nxt))
    return frames


def on_tx_result(state, ok):
    """Update the transmit error counter; overflow forces bus-off."""
    if ok:
        state.tec = max(state.tec - 1, 0)
        return False
    state.tec += TEC_ERROR_STEP
    if state.tec > BUS_OFF_THRESHOLD:
        state.mode = EcuMode.BUS_OFF
        state.wake_deadline_us = None
        return True
    return False


def on_rx_result(state, ok):
    """Update the receive error counter; it never forces bus-off."""
    if ok:
        state.rec = max(state.rec - 1, 0)
    else:
        state.rec += REC_ERROR_STEP


def attempt_recovery(state, config, trigger):
    """Recover a bus-off ECU into sleep if its policy allows the trigger."""
    if state.mode is not EcuMode.BUS_OFF:
        return False
    policy = config.recovery_policy
    allowed = (
        policy is RecoveryPolicy.AUTO_RECOVER
        or (policy is RecoveryPolicy.MANUAL_RESET_ONLY and trigger is RecoveryTrigger.USER_REQUEST)
    )
    if not allowed:
        return False
    state.mode = EcuMode.SLEEP
    state.tec = 0
    state.rec = 0
    state.wake_deadline_us = None
    _halt_schedules(state, config)
    return True


def battery_reset(state, config):
    """Restore the configured parked-state mode, clearing all counters."""
    state.mode = config.initial_mode
    state.tec = 0
    state.rec = 0
    state.wake_deadline_us = None
    state.overrides = {}
    state.ignition_on = False
    _halt_schedules(state, config)


def current_draw(state, config, active_function_loads_a=0.0):
    """Battery current drawn by this ECU in its present mode, in amperes.

    Bus-off keeps the transceiver powered, so it draws the sleep current.
    """
    if state.mode is EcuMode.OFF:
        return 0.0
    if state.mode in (EcuMode.SLEEP, EcuMode.BUS_OFF):
        return config.sleep_current_a
    return config.normal_current_a + active_function_loads_a
