"""Vehicle configuration: strict unit-checked loading and the bundled reference.

Configs are YAML-syntax files whose scalar quantities carry explicit units
("90 uA", "2 s", "45 Ah", "500 kbit/s"); parsing is strict and validation
errors name the offending key path.
"""

from __future__ import annotations

import importlib.resources
import re
from dataclasses import dataclass

import yaml

from . import ecu as ecu_mod
from .attack import Activation, FunctionLoad, FunctionLoadTable
from .bus import BusConfig
from .ecu import (
    EcuConfig,
    FunctionSpec,
    MessageSpec,
    RecoveryPolicy,
    StandbyFunction,
    Terminal,
)
from .power import BatteryConfig
from .wakeup import WakeupFilterParams


class ConfigError(ValueError):
    """Invalid vehicle/scenario configuration; message names the key path."""


_QUANTITY_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*([^\s]*)\s*$")

# Factors normalize to the package-internal canonical units:
# amperes, microseconds, ampere-hours, bits/s, hours, and plain fractions.
# "duration" rounds to whole microseconds (simulation clock); "time" keeps
# sub-microsecond precision for the wake-up filter window.
_TIME_FACTORS = {"s": 1e6, "ms": 1e3, "us": 1.0, "µs": 1.0, "min": 6e7, "h": 3.6e9}
_UNITS = {
    "current": {"a": 1.0, "ma": 1e-3, "ua": 1e-6, "µa": 1e-6},
    "duration": _TIME_FACTORS,
    "time": _TIME_FACTORS,
    "capacity": {"ah": 1.0, "mah": 1e-3},
    "bitrate": {"bit/s": 1.0, "kbit/s": 1e3, "mbit/s": 1e6},
    "hours": {"h": 1.0, "hours": 1.0},
    "fraction": {"%": 0.01, "": 1.0},
}


def parse_quantity(value, kind, path):
    """Parse a unit-suffixed scalar into the canonical unit for its kind."""
    units = _UNITS[kind]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if kind == "fraction":
            return float(value)
        raise ConfigError(f"{path}: missing unit (expected one of {sorted(units)})")
    if not isinstance(value, str):
        raise ConfigError(f"{path}: expected a quantity string, got {value!r}")
    m = _QUANTITY_RE.match(value)
    if not m:
        raise ConfigError(f"{path}: malformed quantity {value!r}")
    number, unit = m.group(1), m.group(2).lower()
    if unit not in units:
        raise ConfigError(
            f"{path}: unknown unit {m.group(2)!r} (expected one of {sorted(units)})"
        )
    try:
        scaled = float(number) * units[unit]
    except ValueError:
        raise ConfigError(f"{path}: malformed number {number!r}") from None
    if kind == "duration":
        return int(round(scaled))
    return scaled


@dataclass(frozen=True)
class VehicleConfig:
    """Complete per-vehicle simulation input: bus, roster, loads, battery."""

    name: str
    bitrate: int
    base_parasitic_current_a: float
    ecus: tuple
    loads: FunctionLoadTable
    wakeup_params: WakeupFilterParams = WakeupFilterParams()
    battery: BatteryConfig = BatteryConfig()
    night: bool = False
    attacker_bitrate: int = None

    def __post_init__(self):
        object.__setattr__(self, "ecus", tuple(self.ecus))
        if not self.ecus:
            raise ConfigError("ecus: roster must not be empty")
        if self.base_parasitic_current_a < 0:
            raise ConfigError("base_parasitic_current: must be non-negative")
        names = [n.name for n in self.ecus]
        if len(set(names)) != len(names):
            raise ConfigError("ecus: duplicate ECU names")
        seen = {}
        for node in self.ecus:
            for can_id in node.scheduled_ids():
                if can_id in seen:
                    raise ConfigError(
                        f"ecus: schedule id {can_id:#05x} used by both "
                        f"{seen[can_id]} and {node.name}"
                    )
                seen[can_id] = node.name

    def bus_config(self):
        return BusConfig(
            bitrate=self.bitrate,
            nodes=self.ecus,
            attacker_bitrate=self.attacker_bitrate,
            wakeup_params=self.wakeup_params,
        )

    def node(self, name):
        for n in self.ecus:
            if n.name == name:
                return n
        raise KeyError(f"no ECU named {name}")

    def function_host(self, function):
        for n in self.ecus:
            for fn in n.functions:
                if fn.function is function:
                    return n, fn
        raise KeyError(f"no ECU hosts a {function.value} control")

    def all_functions(self):
        return [(n, fn) for n in self.ecus for fn in n.functions]

    @property
    def baseline_current_a(self):
        """Parked, unattacked draw: always-on base plus every sleeper's current."""
        total = self.base_parasitic_current_a
        for n in self.ecus:
            state = ecu_mod.EcuState(mode=n.initial_mode)
            total += ecu_mod.current_draw(state, n)
        return total

    @property
    def wakeable_ecus(self):
        return tuple(n for n in self.ecus if n.wakeable)


# --- strict YAML loading -----------------------------------------------------

def _expect_mapping(value, path):
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected a mapping")
    return value


class _Section:
    def __init__(self, mapping, path):
        self.mapping = _expect_mapping(mapping, path)
        self.path = path
        self._taken = set()

    def take(self, key, default=None, required=False):
        self._taken.add(key)
        if key not in self.mapping:
            if required:
                raise ConfigError(f"{self.path}.{key}: missing required key")
            return default
        return self.mapping[key]

    def quantity(self, key, kind, default=None, required=False):
        raw = self.take(key, required=required)
        if raw is None:
            return default
        return parse_quantity(raw, kind, f"{self.path}.{key}")

    def finish(self):
        unknown = set(self.mapping) - self._taken
        if unknown:
            raise ConfigError(f"{self.path}: unknown keys {sorted(unknown)}")


def _parse_int(value, path):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _parse_baseline(value, path):
    if value is None or value == "":
        return b""
    if not isinstance(value, str):
        raise ConfigError(f"{path}: expected hex byte string")
    try:
        return bytes.fromhex(value.replace(" ", ""))
    except ValueError:
        raise ConfigError(f"{path}: malformed hex byte string {value!r}") from None


def _parse_enum(value, enum_cls, path, aliases=None):
    lookup = {member.value: member for member in enum_cls}
    if aliases:
        lookup.update(aliases)
    if value not in lookup:
        raise ConfigError(f"{path}: expected one of {sorted(lookup)}, got {value!r}")
    return lookup[value]


def _parse_message(raw, path):
    sec = _Section(raw, path)
    can_id = _parse_int(sec.take("id", required=True), f"{path}.id")
    period = sec.quantity("period", "duration", required=True)
    baseline = _parse_baseline(sec.take("baseline"), f"{path}.baseline")
    dlc = sec.take("dlc")
    if dlc is None:
        dlc = len(baseline) if baseline else 8
    dlc = _parse_int(dlc, f"{path}.dlc")
    if not baseline:
        baseline = bytes(dlc)
    free_run = sec.take("free_run", default=[])
    if not isinstance(free_run, list):
        raise ConfigError(f"{path}.free_run: expected a list of byte indexes")
    sec.finish()
    try:
        return MessageSpec(can_id, period, dlc, baseline,
                           tuple(_parse_int(b, f"{path}.free_run") for b in free_run))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_function(raw, path):
    sec = _Section(raw, path)
    function = _parse_enum(sec.take("function", required=True), StandbyFunction,
                           f"{path}.function")
    message = _parse_int(sec.take("message", required=True), f"{path}.message")
    byte = _parse_int(sec.take("byte", required=True), f"{path}.byte")
    idle = _parse_int(sec.take("idle", required=True), f"{path}.idle")
    active = _parse_int(sec.take("active", required=True), f"{path}.active")
    mask = _parse_int(sec.take("mask", default=0xFF), f"{path}.mask")
    extra = sec.take("extra_commands", default=[])
    sec.finish()
    try:
        return FunctionSpec(function, message, byte, idle, active, mask,
                            tuple(_parse_int(v, f"{path}.extra_commands") for v in extra))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


_RECOVERY_ALIASES = {"auto": RecoveryPolicy.AUTO_RECOVER,
                     "never": RecoveryPolicy.NEVER_RECOVER,
                     "manual": RecoveryPolicy.MANUAL_RESET_ONLY}


def _parse_ecu(raw, path):
    sec = _Section(raw, path)
    name = sec.take("name", required=True)
    terminal = _parse_enum(sec.take("terminal", required=True), Terminal, f"{path}.terminal")
    t_wakeup = sec.quantity("t_wakeup", "duration", default=2_000_000)
    sleep_current = sec.quantity("sleep_current", "current", required=True)
    normal_current = sec.quantity("normal_current", "current", required=True)
    if sleep_current < 0 or normal_current < 0:
        raise ConfigError(f"{path}: currents must be non-negative")
    recovery = _parse_enum(sec.take("recovery", default="auto"), RecoveryPolicy,
                           f"{path}.recovery", aliases=_RECOVERY_ALIASES)
    schedule = [
        _parse_message(m, f"{path}.schedule[{i}]")
        for i, m in enumerate(sec.take("schedule", default=[]))
    ]
    functions = [
        _parse_function(f, f"{path}.functions[{i}]")
        for i, f in enumerate(sec.take("functions", default=[]))
    ]
    standby = frozenset(
        _parse_enum(s, StandbyFunction, f"{path}.standby")
        for s in sec.take("standby", default=[])
    )
    raw_filter = sec.take("wakeup_filter")
    wakeup_params = (_parse_filter(raw_filter, f"{path}.wakeup_filter")
                     if raw_filter is not None else None)
    sec.finish()
    try:
        return EcuConfig(
            name=name, terminal=terminal, t_wakeup_us=t_wakeup,
            sleep_current_a=sleep_current, normal_current_a=normal_current,
            schedule=tuple(schedule), functions=tuple(functions),
            recovery_policy=recovery, standby_functions=standby,
            wakeup_params=wakeup_params,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_loads(raw, path):
    loads = {}
    for key, value in _expect_mapping(raw, path).items():
        fn = _parse_enum(key, StandbyFunction, path)
        sec = _Section(value, f"{path}.{key}")
        current = sec.quantity("current", "current", required=True)
        activation = _parse_enum(sec.take("activation", default="while_repeated"),
                                 Activation, f"{path}.{key}.activation")
        auto_off = sec.quantity("auto_off_after", "duration")
        night_multiplier = sec.take("night_multiplier", default=1.0)
        sec.finish()
        try:
            loads[fn] = FunctionLoad(current, activation, auto_off, float(night_multiplier))
        except ValueError as exc:
            raise ConfigError(f"{path}.{key}: {exc}") from None
    return FunctionLoadTable(loads)


def _parse_battery(raw, path):
    sec = _Section(raw or {}, path)
    kwargs = {}
    capacity = sec.quantity("capacity", "capacity")
    if capacity is not None:
        kwargs["capacity_ah"] = capacity
    for key, field_name in (("soc_start", "soc_start"), ("soc_min_start", "soc_min_start")):
        value = sec.quantity(key, "fraction")
        if value is not None:
            kwargs[field_name] = value
    threshold = sec.quantity("parasitic_threshold", "current")
    if threshold is not None:
        kwargs["parasitic_threshold_a"] = threshold
    exponent = sec.take("peukert_exponent")
    if exponent is not None:
        kwargs["peukert_exponent"] = float(exponent)
    hours = sec.quantity("rated_discharge_hours", "hours")
    if hours is not None:
        kwargs["rated_discharge_hours"] = hours
    sec.finish()
    try:
        return BatteryConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_filter(raw, path):
    sec = _Section(raw or {}, path)
    kwargs = {}
    for key, field_name in (("t_filter_min", "t_filter_min_us"),
                            ("t_filter_max", "t_filter_max_us"),
                            ("gray_zone_threshold", "gray_zone_threshold_us")):
        value = sec.quantity(key, "time")
        if value is not None:
            kwargs[field_name] = float(value)
    sec.finish()
    try:
        return WakeupFilterParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_vehicle(doc, source="<config>"):
    sec = _Section(doc, source)
    name = sec.take("name", required=True)
    bus_sec = _Section(sec.take("bus", required=True), f"{source}.bus")
    bitrate = int(bus_sec.quantity("bitrate", "bitrate", required=True))
    attacker_bitrate = bus_sec.quantity("attacker_bitrate", "bitrate")
    base = bus_sec.quantity("base_parasitic_current", "current", default=0.0)
    bus_sec.finish()
    night = bool(sec.take("night", default=False))
    loads = _parse_loads(sec.take("function_loads", default={}), f"{source}.function_loads")
    wakeup_params = _parse_filter(sec.take("wakeup_filter"), f"{source}.wakeup_filter")
    battery = _parse_battery(sec.take("battery"), f"{source}.battery")
    raw_ecus = sec.take("ecus", required=True)
    if not isinstance(raw_ecus, list):
        raise ConfigError(f"{source}.ecus: expected a list")
    ecus = [_parse_ecu(e, f"{source}.ecus[{i}]") for i, e in enumerate(raw_ecus)]
    sec.finish()
    return VehicleConfig(
        name=name, bitrate=bitrate, base_parasitic_current_a=base,
        ecus=tuple(ecus), loads=loads, wakeup_params=wakeup_params,
        battery=battery, night=night,
        attacker_bitrate=int(attacker_bitrate) if attacker_bitrate else None,
    )


def load_vehicle(path):
    """Load and validate a vehicle config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML syntax error: {exc}") from None
    if doc is None:
        raise ConfigError(f"{path}: empty config file")
    return parse_vehicle(doc, source=str(path))


def reference_vehicle():
    """The bundled 13-ECU reference vehicle."""
    resource = importlib.resources.files("parkedcan.data").joinpath("reference_2017.cfg")
    with importlib.resources.as_file(resource) as path:
        return load_vehicle(path)
