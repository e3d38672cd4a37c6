"""Synthetic recon sessions: parked wake-flood, driver actions, ignition-on.

A session keeps the parked bus awake with a periodic wake-up flood, plants
timed driver actions (temporary status-byte changes on the owning module's
messages), turns the ignition on at a known boundary, and then records the
full traffic log plus the planted ground truth for analyzer validation.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import bus
from .bus import IgnitionOn, SetOverride
from .ecu import StandbyFunction
from .frame import ALL_ONES_FRAME
from .recon import records_from_events

FLOOD_ID = ALL_ONES_FRAME.can_id

# Default driver-action offsets before the ignition boundary; chosen so the
# deviating records land inside the analyzer's 5 s pre-boundary event window
# even when the detected boundary is one window off.
_ACTION_OFFSETS_US = {
    StandbyFunction.TRUNK_CONTROL: (3_600_000, 1_500_000),   # open, then closed
    StandbyFunction.POWER_MODE: (2_800_000, None),           # persists into run
    StandbyFunction.DOOR_CONTROL: (2_000_000, 1_000_000),    # unlock, re-lock
}


@dataclass(frozen=True)
class PlantedEvent:
    function: StandbyFunction
    node: str
    message_id: int
    byte_index: int
    idle_value: int
    active_value: int
    onset_us: int
    duration_us: int  # None: persists into ignition-on


@dataclass
class SessionResult:
    run: bus.RunResult
    records: list
    boundary_us: int
    flood_id: int
    planted: list


def plan_driver_actions(vehicle, boundary_us, offsets=None):
    """Planted events for every control function the vehicle hosts."""
    offsets = offsets or _ACTION_OFFSETS_US
    planted = []
    for node, fn in vehicle.all_functions():
        timing = offsets.get(fn.function)
        if timing is None:
            continue
        before_us, duration_us = timing
        planted.append(PlantedEvent(
            function=fn.function,
            node=node.name,
            message_id=fn.message_id,
            byte_index=fn.byte_index,
            idle_value=fn.idle_value,
            active_value=fn.active_value,
            onset_us=boundary_us - before_us,
            duration_us=duration_us,
        ))
    return planted


def run_recon_session(vehicle, off_duration_us=20_000_000, on_duration_us=8_000_000,
                      flood_period_us=None, actions=None):
    """Simulate one parked-then-started session and return its traffic log."""
    if flood_period_us is None:
        stays = [n.t_wakeup_us for n in vehicle.wakeable_ecus]
        flood_period_us = min(stays, default=2_000_000)
    boundary_us = off_duration_us
    duration_us = off_duration_us + on_duration_us

    injections = [
        (t, ALL_ONES_FRAME) for t in range(0, off_duration_us, flood_period_us)
    ]
    planted = plan_driver_actions(vehicle, boundary_us) if actions is None else actions
    directives = []
    for event in planted:
        directives.append((event.onset_us, SetOverride(
            event.node, event.message_id, event.byte_index, event.active_value)))
        if event.duration_us is not None:
            directives.append((event.onset_us + event.duration_us, SetOverride(
                event.node, event.message_id, event.byte_index, None)))
    directives.append((boundary_us, IgnitionOn()))

    result = bus.run(vehicle.bus_config(), injections, duration_us, directives)
    return SessionResult(
        run=result,
        records=records_from_events(result),
        boundary_us=boundary_us,
        flood_id=FLOOD_ID,
        planted=planted,
    )
