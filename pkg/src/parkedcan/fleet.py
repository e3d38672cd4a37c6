"""Deterministic synthetic-fleet generation.

Modern-era vehicles carry several wakeable body modules with unlock /
power-mode / trunk controls and are constructed so that the awakened-ID share
of the ignition-on ID set falls in the observed 49–95% band; old-era vehicles
have at most one wakeable ECU and no standby controls.
"""

from __future__ import annotations

import random

from .attack import Activation, FunctionLoad, FunctionLoadTable
from .ecu import (
    EcuConfig,
    FunctionSpec,
    MessageSpec,
    StandbyFunction,
    Terminal,
)
from .power import BatteryConfig
from .vehicle import VehicleConfig

# All periods stay under the 1 s analysis window so every scheduled ID shows
# up in every window of its regime; the ignition boundary is then a clean
# per-window count jump.
_PERIODS_MS = (100, 200, 250, 400, 500, 800)

_CONTROL_FUNCTIONS = (
    StandbyFunction.DOOR_CONTROL,
    StandbyFunction.POWER_MODE,
    StandbyFunction.TRUNK_CONTROL,
)


def _draw_payload(rng, dlc):
    return bytes(rng.randrange(256) for _ in range(dlc))


def _make_message(rng, can_id):
    dlc = rng.choice((4, 8, 8, 8))
    period_us = rng.choice(_PERIODS_MS) * 1000
    free_choice = rng.random()
    if free_choice < 0.6:
        free = (dlc - 1,)
    elif free_choice < 0.8 and dlc == 8:
        free = (6, 7)
    else:
        free = ()
    return MessageSpec(can_id, period_us, dlc, _draw_payload(rng, dlc), free)


def _split_ids(rng, ids, parts, minimum):
    """Partition `ids` into `parts` groups of at least `minimum` each."""
    counts = [minimum] * parts
    for _ in range(len(ids) - minimum * parts):
        counts[rng.randrange(parts)] += 1
    out = []
    pos = 0
    for c in counts:
        out.append(ids[pos:pos + c])
        pos += c
    return out


def _control_spec(rng, function, message):
    candidates = [b for b in range(message.dlc) if b not in message.free_run_bytes]
    byte_index = rng.choice(candidates)
    idle = message.baseline[byte_index]
    active = idle ^ rng.choice((0x10, 0x20, 0x30, 0x40, 0x60))
    extra = (idle,) if function is StandbyFunction.DOOR_CONTROL else ()
    return FunctionSpec(function, message.can_id, byte_index, idle, active,
                        mask=0xFF, extra_command_values=extra)


def _wakeable_ecu(rng, name, ids, function=None):
    schedule = [_make_message(rng, i) for i in ids]
    functions = ()
    if function is not None:
        functions = (_control_spec(rng, function, schedule[0]),)
    sleep_a = rng.randrange(50, 96) * 1e-6
    return EcuConfig(
        name=name,
        terminal=Terminal.T30,
        t_wakeup_us=2_000_000,
        sleep_current_a=sleep_a,
        normal_current_a=sleep_a + rng.randrange(3000, 9001) * 1e-6,
        schedule=tuple(schedule),
        functions=functions,
    )


def _switched_ecu(rng, name, ids):
    return EcuConfig(
        name=name,
        terminal=Terminal.T15,
        sleep_current_a=50e-6,
        normal_current_a=5e-3,
        schedule=tuple(_make_message(rng, i) for i in ids),
    )


def _default_loads(rng):
    return FunctionLoadTable({
        StandbyFunction.POWER_MODE: FunctionLoad(
            rng.randrange(20, 45) * 1e-3, Activation.WHILE_REPEATED),
        StandbyFunction.DOOR_CONTROL: FunctionLoad(
            rng.randrange(15, 35) * 1e-3, Activation.WHILE_REPEATED,
            night_multiplier=2.5),
        StandbyFunction.TRUNK_CONTROL: FunctionLoad(
            rng.randrange(35, 65) * 1e-3, Activation.LATCHED_UNTIL_CLOSED),
    })


def _modern_vehicle(rng, name):
    n_total = rng.randrange(30, 57)
    ratio = rng.uniform(0.63, 0.84)
    n_wakeable_ids = round(ratio * n_total)
    n_wakeable_ecus = rng.randrange(3, 6)
    n_switched_ecus = min(rng.randrange(5, 10), n_total - n_wakeable_ids)

    ids = rng.sample(range(0x001, 0x7FF), n_total)
    wake_groups = _split_ids(rng, ids[:n_wakeable_ids], n_wakeable_ecus, 2)
    switched_groups = _split_ids(rng, ids[n_wakeable_ids:], n_switched_ecus, 1)

    hosts = rng.sample(range(n_wakeable_ecus), 3)
    host_function = {idx: fn for idx, fn in zip(hosts, _CONTROL_FUNCTIONS)}
    ecus = [
        _wakeable_ecu(rng, f"B{idx}", group, host_function.get(idx))
        for idx, group in enumerate(wake_groups)
    ]
    ecus += [
        _switched_ecu(rng, f"P{idx}", group)
        for idx, group in enumerate(switched_groups)
    ]
    return VehicleConfig(
        name=name,
        bitrate=500_000,
        base_parasitic_current_a=rng.randrange(8000, 13001) * 1e-6,
        ecus=tuple(ecus),
        loads=_default_loads(rng),
        battery=BatteryConfig(),
    )


def _old_vehicle(rng, name):
    n_wakeable = rng.randrange(2)  # none, or a single always-listening module
    n_total = rng.randrange(12, 25)
    n_switched_ecus = rng.randrange(4, 9)
    ids = rng.sample(range(0x001, 0x7FF), n_total)
    ecus = []
    if n_wakeable:
        n_wake_ids = rng.randrange(1, 4)
        ecus.append(_wakeable_ecu(rng, "B0", ids[:n_wake_ids]))
        ids = ids[n_wake_ids:]
    groups = _split_ids(rng, ids, n_switched_ecus, 1)
    ecus += [_switched_ecu(rng, f"P{idx}", group) for idx, group in enumerate(groups)]
    return VehicleConfig(
        name=name,
        bitrate=500_000,
        base_parasitic_current_a=rng.randrange(8000, 13001) * 1e-6,
        ecus=tuple(ecus),
        loads=FunctionLoadTable({}),
        battery=BatteryConfig(),
    )


def generate_fleet(seed, count, era):
    """Deterministically generate `count` vehicle configs for an era."""
    if count <= 0:
        raise ValueError("count must be positive")
    if era not in ("old", "modern"):
        raise ValueError(f"era must be 'old' or 'modern', got {era!r}")
    fleet = []
    for index in range(count):
        rng = random.Random(f"{seed}:{era}:{index}")
        name = f"{era}-{seed}-{index:03d}"
        if era == "modern":
            fleet.append(_modern_vehicle(rng, name))
        else:
            fleet.append(_old_vehicle(rng, name))
    return fleet
