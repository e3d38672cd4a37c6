"""Command-line interface: simulate, attack, analyze, report, reset."""

from __future__ import annotations

import argparse
import json
import pathlib
import sys

from . import attack, bus, recon, reporting, scenarios, tracefile
from .ecu import EcuMode, Terminal
from .frame import ALL_ONES_FRAME
from .vehicle import ConfigError, load_vehicle, parse_quantity

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2

_PLAN_NAMES = ("none", "wake-flood", "power-mode", "door-cycle", "trunk",
               "full-drain", "dob")


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures remapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _duration(text):
    return parse_quantity(text, "duration", "duration")


def build_parser():
    parser = _Parser(prog="parkedcan",
                     description="Ignition-off CAN network simulator: wake-up "
                                 "flooding, battery-drain scenarios, forced "
                                 "bus-off, and trace analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a vehicle and write a trace file")
    sim.add_argument("--vehicle", required=True, help="vehicle config file")
    sim.add_argument("--duration", required=True, type=_duration,
                     help="simulated time, e.g. 60s, 5min, 72h")
    sim.add_argument("--flood-period", type=_duration,
                     help="inject all-1s wake-up frames at this period")
    sim.add_argument("--wake-at", action="append", type=_duration, default=[],
                     help="inject one wake-up frame at this time (repeatable)")
    sim.add_argument("--ignition-at", type=_duration,
                     help="turn the ignition on at this time; floods the bus "
                          "before it and plants default driver actions")
    sim.add_argument("--no-actions", action="store_true",
                     help="with --ignition-at: do not plant driver actions")
    sim.add_argument("--out", required=True, help="trace file to write")

    atk = sub.add_parser("attack", help="execute an attack plan and report drain")
    atk.add_argument("--vehicle", required=True)
    atk.add_argument("--plan", required=True, choices=_PLAN_NAMES)
    atk.add_argument("--duration", type=_duration, default=72 * 3_600_000_000,
                     help="drain horizon (default 72h)")
    atk.add_argument("--dt", type=_duration, default=1_000_000,
                     help="drain integration step (default 1s)")
    atk.add_argument("--out-dir", required=True)
    atk.add_argument("--no-figures", action="store_true")

    ana = sub.add_parser("analyze", help="reverse-engineer control messages from a trace")
    ana.add_argument("--trace", required=True)
    ana.add_argument("--window", type=_duration, default=1_000_000)
    ana.add_argument("--jump-factor", type=float, default=1.5)
    ana.add_argument("--change-fraction", type=float, default=0.5)
    ana.add_argument("--event-window", type=_duration, default=5_000_000)
    ana.add_argument("--exclude-id", action="append", default=[],
                     help="hex frame ID to ignore, e.g. 7FF (repeatable)")
    ana.add_argument("--out-dir", required=True)
    ana.add_argument("--no-figures", action="store_true")

    rep = sub.add_parser("report", help="render drain reports into a table and figures")
    rep.add_argument("reports", nargs="+", help="drain report JSON files")
    rep.add_argument("--out-dir", required=True)
    rep.add_argument("--no-figures", action="store_true")

    res = sub.add_parser("reset", help="apply a battery reset to a saved vehicle state")
    res.add_argument("--state", required=True, help="state JSON written by `attack`")
    res.add_argument("--out", help="write the reset state here (default: in place)")
    return parser


def _out_dir(path):
    out = pathlib.Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _slug(label):
    return "".join(c if c.isalnum() else "-" for c in label.lower()).strip("-")


# --- subcommands ---------------------------------------------------------------

def _cmd_simulate(args):
    vehicle = load_vehicle(args.vehicle)
    if args.ignition_at is not None:
        if args.ignition_at >= args.duration:
            raise ConfigError("--ignition-at must be before --duration")
        session = scenarios.run_recon_session(
            vehicle,
            off_duration_us=args.ignition_at,
            on_duration_us=args.duration - args.ignition_at,
            flood_period_us=args.flood_period,
            actions=[] if args.no_actions else None,
        )
        records = session.records
    else:
        times = set(args.wake_at)
        if args.flood_period:
            times.update(range(0, args.duration, args.flood_period))
        injections = [(t, ALL_ONES_FRAME) for t in sorted(times)]
        result = bus.run(vehicle.bus_config(), injections, args.duration)
        records = recon.records_from_events(result)
    tracefile.write_trace(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def _write_state(vehicle, result, path):
    state = {
        "vehicle": vehicle.name,
        "ecus": {
            name: {
                "terminal": vehicle.node(name).terminal.value,
                "mode": st.mode.value,
                "tec": st.tec,
                "rec": st.rec,
            }
            for name, st in sorted(result.final_states.items())
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(state, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_attack(args):
    vehicle = load_vehicle(args.vehicle)
    out = _out_dir(args.out_dir)
    dt_s = args.dt / 1e6

    if args.plan == "full-drain":
        plans = attack.drain_suite_plans(vehicle)
    elif args.plan == "none":
        plans = [("None", attack.standard_plan(vehicle, "none"))]
    else:
        plans = [(args.plan, attack.standard_plan(vehicle, args.plan))]

    entries = []
    last = None
    for label, plan in plans:
        execution = attack.execute(plan, vehicle, duration_us=args.duration,
                                   dt_s=dt_s, label=label)
        entries.append((execution.report, vehicle.battery, vehicle.baseline_current_a))
        reporting.dump_drain_report(
            execution.report, vehicle.battery, vehicle.baseline_current_a,
            out / f"drain_{len(entries) - 1}_{_slug(label)}.json",
        )
        last = execution

    table = reporting.render_drain_table(entries)
    (out / "table.txt").write_text(table, encoding="utf-8")
    reporting.write_drain_csv(entries, out / "table.csv")
    if not args.no_figures:
        reporting.render_drain_figures(entries, out)

    tracefile.write_trace(recon.records_from_events(last.run), out / "trace.log")
    _write_state(vehicle, last.run, out / "state.json")

    lines = [f"{fn.value}: {'available' if ok else 'UNAVAILABLE'}"
             for fn, ok in sorted(last.availability.items(), key=lambda kv: kv[0].value)]
    if args.plan == "dob":
        dob = attack.dob_attack(vehicle)
        lines.append(f"permanently off: {', '.join(dob.permanently_off) or 'none'}")
        lines.append(f"attack duration: {dob.attack_duration_us / 1e6:.3f} s "
                     f"(first injection to last bus-off)")
        lines.append(f"distinct IDs awake before: {dob.distinct_ids_before}")
        lines.append(f"distinct IDs awake after:  {dob.distinct_ids_after}")
        _write_state(vehicle, dob.run, out / "state.json")
    (out / "availability.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    sys.stdout.write(table)
    return EXIT_OK


def _cmd_analyze(args):
    records = tracefile.read_trace(args.trace)
    exclude = frozenset(int(x, 16) for x in args.exclude_id)
    report = recon.analyze(
        records,
        window_us=args.window,
        jump_factor=args.jump_factor,
        change_fraction=args.change_fraction,
        event_window_us=args.event_window,
        exclude_ids=exclude,
    )
    out = _out_dir(args.out_dir)
    text = reporting.render_recon_text(report)
    (out / "recon.txt").write_text(text, encoding="utf-8")
    reporting.write_recon_csv(report, out / "candidates.csv")
    if not args.no_figures:
        filtered = [r for r in records if r.can_id not in exclude]
        reporting.render_recon_figure(filtered, report, out / "id_activity.png",
                                      window_us=args.window)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_report(args):
    entries = [reporting.load_drain_report(path) for path in args.reports]
    out = _out_dir(args.out_dir)
    table = reporting.render_drain_table(entries)
    (out / "table.txt").write_text(table, encoding="utf-8")
    reporting.write_drain_csv(entries, out / "table.csv")
    if not args.no_figures:
        reporting.render_drain_figures(entries, out)
    sys.stdout.write(table)
    return EXIT_OK


def _cmd_reset(args):
    try:
        with open(args.state, "r", encoding="utf-8") as fh:
            state = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{args.state}: {exc}") from None
    if "ecus" not in state:
        raise ConfigError(f"{args.state}: not a vehicle state file")
    for name, entry in state["ecus"].items():
        terminal = entry.get("terminal", Terminal.T30.value)
        entry["mode"] = (EcuMode.OFF if terminal == Terminal.T15.value
                         else EcuMode.SLEEP).value
        entry["tec"] = 0
        entry["rec"] = 0
    out_path = args.out or args.state
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(state, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"battery reset applied; state written to {out_path}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "attack": _cmd_attack,
        "analyze": _cmd_analyze,
        "report": _cmd_report,
        "reset": _cmd_reset,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, tracefile.TraceFormatError, ValueError) as exc:
        print(f"parkedcan: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyError as exc:
        print(f"parkedcan: {exc.args[0]}", file=sys.stderr)
        return EXIT_VALIDATION


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
