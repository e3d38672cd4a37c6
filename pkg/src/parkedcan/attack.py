"""Attack orchestration: injection schedules, drain scenarios, and forced bus-off.

Drain scenarios run the bus at event level over a bounded pattern window,
measure the steady-state current over the final injection cycle, and then
integrate the battery down over the full requested horizon at that current;
the multi-week drain dynamics are periodic, so this is exact for the
configured loads while keeping runs fast.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import bus, power
from .bus import BusEventKind, RecoverySweep, SetMismatch
from .ecu import EcuMode, StandbyFunction
from .frame import ALL_ONES_FRAME, CanFrame

US_PER_S = 1_000_000


class AttackKind(enum.Enum):
    WAKEUP_FLOOD = "wakeup_flood"
    POWER_MODE_CONTROL = "power_mode_control"
    DOOR_CYCLE = "door_cycle"
    TRUNK_OPEN = "trunk_open"
    DOB = "dob"
    COMPOSITE = "composite"


class Activation(enum.Enum):
    WHILE_REPEATED = "while_repeated"
    LATCHED_UNTIL_CLOSED = "latched_until_closed"


@dataclass(frozen=True)
class FunctionLoad:
    """Added battery current while a vehicle function is active."""

    current_a: float
    activation: Activation = Activation.WHILE_REPEATED
    auto_off_after_us: int = None
    night_multiplier: float = 1.0

    def __post_init__(self):
        if self.current_a < 0:
            raise ValueError("function load must be non-negative")
        if self.night_multiplier < 1.0:
            raise ValueError("night multiplier must be >= 1")


@dataclass(frozen=True, eq=True)
class FunctionLoadTable:
    loads: dict

    def __post_init__(self):
        object.__setattr__(self, "loads", dict(self.loads))

    def get(self, function):
        return self.loads.get(function)

    def items(self):
        return self.loads.items()

    def effective_current_a(self, function, night=False):
        load = self.loads.get(function)
        if load is None:
            return 0.0
        return load.current_a * (load.night_multiplier if night else 1.0)


@dataclass(frozen=True)
class AttackPlan:
    kind: AttackKind
    control_id: int = None
    control_payloads: tuple = ()
    injection_period_us: int = None
    start_us: int = 0
    stop_us: int = None
    relight_period_us: int = None    # trunk re-injection when lights auto-off
    controls_function: StandbyFunction = None
    parts: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "control_payloads",
                           tuple(bytes(p) for p in self.control_payloads))
        object.__setattr__(self, "parts", tuple(self.parts))
        needs_control = self.kind in (
            AttackKind.POWER_MODE_CONTROL, AttackKind.DOOR_CYCLE, AttackKind.TRUNK_OPEN
        )
        if needs_control and (self.control_id is None or not self.control_payloads):
            raise ValueError(f"{self.kind.value} plan needs a control id and payload")
        if self.injection_period_us is not None and self.injection_period_us <= 0:
            raise ValueError("injection period must be positive")
        periodic = self.kind in (
            AttackKind.WAKEUP_FLOOD, AttackKind.POWER_MODE_CONTROL, AttackKind.DOOR_CYCLE
        )
        if periodic and self.injection_period_us is None:
            raise ValueError(f"{self.kind.value} plan needs an injection period")

    def flattened(self):
        if self.kind is AttackKind.COMPOSITE:
            out = []
            for part in self.parts:
                out.extend(part.flattened())
            return out
        return [self]

    def max_period_us(self):
        periods = [p.injection_period_us for p in self.flattened()
                   if p.injection_period_us is not None]
        return max(periods) if periods else None


def required_injection_period(t_wakeup_us):
    """Longest injection period that still keeps woken ECUs in normal mode."""
    if t_wakeup_us <= 0:
        raise ValueError("t_wakeup must be positive")
    return t_wakeup_us


# --- plan factories ---------------------------------------------------------

def wakeup_flood(period_us, start_us=0, stop_us=None):
    return AttackPlan(AttackKind.WAKEUP_FLOOD, injection_period_us=period_us,
                      start_us=start_us, stop_us=stop_us)


def control_plan(kind, control_id, payloads, period_us=None, start_us=0,
                 stop_us=None, function=None, relight_period_us=None):
    return AttackPlan(kind, control_id=control_id, control_payloads=tuple(payloads),
                      injection_period_us=period_us, start_us=start_us, stop_us=stop_us,
                      controls_function=function, relight_period_us=relight_period_us)


def composite(*parts):
    return AttackPlan(AttackKind.COMPOSITE, parts=tuple(parts))


def dob_plan(start_us=0):
    return AttackPlan(AttackKind.DOB, start_us=start_us)


def _command_frame(host_message, fn, value):
    payload = bytearray(host_message.dlc)
    payload[fn.byte_index] = value
    return bytes(payload)


def standard_plan(vehicle, name):
    """Build a named scenario from a vehicle's function specs.

    Names: none, wake-flood, power-mode, door-cycle, trunk, full-drain, dob.
    The cumulative `full-drain` is the four drain scenarios layered together.
    """
    wakeable_stays = [n.t_wakeup_us for n in vehicle.ecus if n.wakeable]
    flood_period = required_injection_period(min(wakeable_stays, default=2_000_000))

    def control_part(function, kind, period_us, start_us, alternate=False):
        host, fn = vehicle.function_host(function)
        message = host.message(fn.message_id)
        payloads = [_command_frame(message, fn, fn.active_value)]
        if alternate:
            lock_value = fn.extra_command_values[0] if fn.extra_command_values else fn.idle_value
            payloads.append(_command_frame(message, fn, lock_value))
        load = vehicle.loads.get(function)
        relight = load.auto_off_after_us if load is not None else None
        return control_plan(kind, fn.message_id, payloads, period_us=period_us,
                            start_us=start_us, function=function,
                            relight_period_us=relight)

    if name == "none":
        return composite()
    if name == "wake-flood":
        return wakeup_flood(flood_period)
    if name == "power-mode":
        return control_part(StandbyFunction.POWER_MODE, AttackKind.POWER_MODE_CONTROL,
                            1_000_000, 100_000)
    if name == "door-cycle":
        return control_part(StandbyFunction.DOOR_CONTROL, AttackKind.DOOR_CYCLE,
                            flood_period, 200_000, alternate=True)
    if name == "trunk":
        return control_part(StandbyFunction.TRUNK_CONTROL, AttackKind.TRUNK_OPEN,
                            None, 300_000)
    if name == "full-drain":
        return composite(
            wakeup_flood(flood_period),
            standard_plan(vehicle, "power-mode"),
            standard_plan(vehicle, "door-cycle"),
            standard_plan(vehicle, "trunk"),
        )
    if name == "dob":
        return dob_plan()
    raise ValueError(f"unknown plan name {name!r}")


#: Cumulative drain suite reproducing the reference measurement table.
DRAIN_SUITE = (
    ("None", ("none",)),
    ("+ Wake-up", ("wake-flood",)),
    ("+ Change Power Mode", ("wake-flood", "power-mode")),
    ("+ Lock & Unlock Door", ("wake-flood", "power-mode", "door-cycle")),
    ("+ Open Trunk", ("wake-flood", "power-mode", "door-cycle", "trunk")),
)


def drain_suite_plans(vehicle):
    return [(label, composite(*(standard_plan(vehicle, n) for n in names)))
            for label, names in DRAIN_SUITE]


# --- injection schedules -----------------------------------------------------

# Bus-off attack timeline offsets (relative to plan start).
_DOB_PRE_WINDOW = (200_000, 3_000_000)
_DOB_MISMATCH = (3_100_000, 6_000_000)
_DOB_POST_WINDOW = (7_000_000, 14_500_000)
_DOB_SPAN_US = 15_000_000


def _periodic(start_us, period_us, stop_us):
    t = start_us
    while t < stop_us:
        yield t
        t += period_us


def build_injections(plan, duration_us):
    """Expand a plan into ((time_us, CanFrame), ...) plus timed directives.

    Composite parts are merged time-sorted. The bus-off plan contributes the
    wake-up frame, the bit-rate mismatch window, the recovery sweep, and a
    re-wake flood for the post-attack observation window.
    """
    injections = []
    directives = []
    for part in plan.flattened():
        stop = min(part.stop_us if part.stop_us is not None else duration_us, duration_us)
        if part.kind is AttackKind.WAKEUP_FLOOD:
            for t in _periodic(part.start_us, part.injection_period_us, stop):
                injections.append((t, ALL_ONES_FRAME))
        elif part.kind in (AttackKind.POWER_MODE_CONTROL, AttackKind.DOOR_CYCLE):
            for i, t in enumerate(_periodic(part.start_us, part.injection_period_us, stop)):
                payload = part.control_payloads[i % len(part.control_payloads)]
                injections.append((t, CanFrame.from_payload(part.control_id, payload)))
        elif part.kind is AttackKind.TRUNK_OPEN:
            frame = CanFrame.from_payload(part.control_id, part.control_payloads[0])
            if part.relight_period_us:
                for t in _periodic(part.start_us, part.relight_period_us, stop):
                    injections.append((t, frame))
            elif part.start_us < stop:
                injections.append((part.start_us, frame))
        elif part.kind is AttackKind.DOB:
            # Keep-awake flood spans the whole attack so nodes are normal when
            # the mismatch starts and observable again after the sweep.
            base = part.start_us
            for t in _periodic(base, 2_000_000, stop):
                injections.append((t, ALL_ONES_FRAME))
            directives.append((base + _DOB_MISMATCH[0], SetMismatch(True)))
            directives.append((base + _DOB_MISMATCH[1], SetMismatch(False)))
            directives.append((base + _DOB_MISMATCH[1], RecoverySweep()))
        else:
            raise ValueError(f"cannot build injections for {part.kind}")
    ordered = sorted(
        ((t, i, frame) for i, (t, frame) in enumerate(injections)),
        key=lambda item: (item[0], item[1]),
    )
    return tuple((t, frame) for t, _i, frame in ordered), tuple(directives)


# --- execution ---------------------------------------------------------------

@dataclass
class ExecutionResult:
    plan: AttackPlan
    report: power.DrainReport
    run: bus.RunResult
    availability: dict = field(default_factory=dict)
    attack_duration_us: int = None


@dataclass
class DobResult:
    run: bus.RunResult
    permanently_off: tuple
    attack_duration_us: int
    distinct_ids_before: int
    distinct_ids_after: int
    pre_window_us: tuple
    post_window_us: tuple


def _load_intervals(plan, vehicle, activations):
    """Per-accepted-control load intervals (start_us, end_us|None, amperes)."""
    hold_by_function = {}
    for part in plan.flattened():
        if part.controls_function is not None and part.injection_period_us:
            hold_by_function[part.controls_function] = part.injection_period_us
    raw = []
    for t, _node, function, _value in activations:
        load = vehicle.loads.get(function)
        if load is None:
            continue
        amps = vehicle.loads.effective_current_a(function, vehicle.night)
        if load.activation is Activation.LATCHED_UNTIL_CLOSED:
            raw.append((function, t, None, amps))
        else:
            hold = hold_by_function.get(function, 1_000_000)
            raw.append((function, t, t + hold, amps))
    # Merge overlapping windows per function so repeated commands hold the
    # load active continuously instead of stacking it.
    merged = []
    for function in sorted({r[0] for r in raw}, key=lambda f: f.value):
        windows = sorted(((r[1], r[2]) for r in raw if r[0] is function),
                         key=lambda w: (w[0], w[1] is not None, w[1] or 0))
        amps = next(r[3] for r in raw if r[0] is function)
        cur_start, cur_end = windows[0]
        for start, end in windows[1:]:
            if cur_end is None or start <= cur_end:
                if cur_end is not None:
                    cur_end = None if end is None else max(cur_end, end)
            else:
                merged.append((cur_start, cur_end, amps))
                cur_start, cur_end = start, end
        merged.append((cur_start, cur_end, amps))
    return merged


def _pattern_window_us(plan, duration_us):
    dob_ends = [p.start_us + _DOB_SPAN_US for p in plan.flattened()
                if p.kind is AttackKind.DOB]
    if dob_ends:
        return min(duration_us, max(dob_ends))
    period = plan.max_period_us() or 1_000_000
    return min(duration_us, max(20_000_000, 8 * period))


def execute(plan, vehicle, battery=None, duration_us=72 * 3600 * US_PER_S,
            dt_s=1.0, label=""):
    """Run a plan against a vehicle and report drain, trace, and availability.

    The drain report's mean current is the steady-state value measured over
    the final injection cycle of the pattern window; operation times and the
    SoC timeline are computed from it over the full `duration_us` horizon.
    """
    battery = battery or vehicle.battery
    window_us = _pattern_window_us(plan, duration_us)
    injections, directives = build_injections(plan, window_us)
    result = bus.run(vehicle.bus_config(), injections, window_us, directives)

    intervals = _load_intervals(plan, vehicle, result.activations)
    segments, span_s = power.roster_current_segments(
        result, vehicle.ecus, vehicle.base_parasitic_current_a, intervals
    )
    cycle_s = min((plan.max_period_us() or 1_000_000) / US_PER_S, span_s)
    steady_a = power.mean_current(segments, span_s, (span_s - cycle_s, span_s))

    report = power.integrate_drain(
        [(0.0, steady_a)], battery, dt_s=dt_s, horizon_s=duration_us / US_PER_S,
        label=label, baseline_a=vehicle.baseline_current_a,
    )

    down = {name for name, st in result.final_states.items() if st.mode is EcuMode.BUS_OFF}
    availability = {}
    for node in vehicle.ecus:
        for fn in sorted(node.standby_functions, key=lambda f: f.value):
            availability[fn] = availability.get(fn, True) and node.name not in down

    bus_offs = [e.time_us for e in result.events if e.kind is BusEventKind.BUS_OFF]
    first_injection = injections[0][0] if injections else None
    attack_duration = (max(bus_offs) - first_injection) if bus_offs and injections else None
    return ExecutionResult(plan=plan, report=report, run=result,
                           availability=availability, attack_duration_us=attack_duration)


def dob_attack(vehicle, duration_us=_DOB_SPAN_US):
    """Wake the bus, force a global bus-off, sweep recovery, observe the wreck.

    Returns which nodes stayed down, the elapsed time from the first injection
    to the last bus-off, and the distinct-ID counts over matched awakened
    windows before and after the attack.
    """
    duration_us = max(duration_us, _DOB_SPAN_US)
    plan = dob_plan()
    injections, directives = build_injections(plan, duration_us)
    result = bus.run(vehicle.bus_config(), injections, duration_us, directives)

    permanently_off = tuple(
        name for name, st in result.final_states.items() if st.mode is EcuMode.BUS_OFF
    )
    bus_offs = [e.time_us for e in result.events if e.kind is BusEventKind.BUS_OFF]
    attack_duration = (max(bus_offs) - injections[0][0]) if bus_offs else 0
    before = bus.distinct_id_count(result, _DOB_PRE_WINDOW)
    after = bus.distinct_id_count(result, _DOB_POST_WINDOW)
    return DobResult(
        run=result,
        permanently_off=permanently_off,
        attack_duration_us=attack_duration,
        distinct_ids_before=before,
        distinct_ids_after=after,
        pre_window_us=_DOB_PRE_WINDOW,
        post_window_us=_DOB_POST_WINDOW,
    )
