"""Report rendering: drain tables, recon summaries, CSV files, and figures."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import asdict

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from . import power  # noqa: E402
from .power import BatteryConfig, DrainReport  # noqa: E402

_FIG_DPI = 150


# --- drain report persistence ------------------------------------------------

def dump_drain_report(report, battery, baseline_a, path):
    envelope = {
        "battery": asdict(battery),
        "baseline_current_a": baseline_a,
        "report": report.to_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(envelope, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_drain_report(path):
    with open(path, "r", encoding="utf-8") as fh:
        envelope = json.load(fh)
    battery = BatteryConfig(**envelope["battery"])
    report = DrainReport.from_dict(envelope["report"])
    return report, battery, envelope["baseline_current_a"]


# --- drain table -------------------------------------------------------------

def drain_table_rows(entries):
    """Recompute every rendered figure from the stored mean currents.

    `entries` is a list of (report, battery, baseline_current_a); the
    amplification and operation times always come from the power formulas, so
    the table can never drift from the model.
    """
    rows = []
    for report, battery, baseline_a in entries:
        amp = power.amplification(report.mean_current_a, baseline_a)
        ideal_h = power.operation_time_ideal(battery, report.mean_current_a)
        adj_h = power.operation_time_peukert(battery, report.mean_current_a)
        rows.append({
            "label": report.label,
            "mean_current_ma": report.mean_current_a * 1e3,
            "amplification": amp,
            "operation_time_ideal_days": ideal_h / 24.0,
            "operation_time_adjusted_days": adj_h / 24.0,
            "immobilized_at_hours": report.immobilized_at_h,
            "exceeds_parasitic_threshold": report.mean_current_a > battery.parasitic_threshold_a,
        })
    return rows


def render_drain_table(entries):
    rows = drain_table_rows(entries)
    headers = ("Attack", "Discharged Current [mA]", "Amplification Factor",
               "Max. Battery Operation Time [Days]")
    cells = [
        (
            row["label"],
            f"{row['mean_current_ma']:.1f}",
            "baseline" if abs(row["amplification"] - 1.0) < 1e-9
            else f"x{row['amplification']:.2f}",
            f"{row['operation_time_ideal_days']:.2f}",
        )
        for row in rows
    ]
    widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for c in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(c, widths)).rstrip())
    return "\n".join(lines) + "\n"


def write_drain_csv(entries, path):
    rows = drain_table_rows(entries)
    fields = ["label", "mean_current_ma", "amplification",
              "operation_time_ideal_days", "operation_time_adjusted_days",
              "immobilized_at_hours", "exceeds_parasitic_threshold"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({
                **row,
                "mean_current_ma": f"{row['mean_current_ma']:.6f}",
                "amplification": f"{row['amplification']:.6f}",
                "operation_time_ideal_days": f"{row['operation_time_ideal_days']:.6f}",
                "operation_time_adjusted_days": f"{row['operation_time_adjusted_days']:.6f}",
                "immobilized_at_hours": "" if row["immobilized_at_hours"] is None
                else f"{row['immobilized_at_hours']:.3f}",
            })


# --- figures -----------------------------------------------------------------

def _save(fig, path):
    fig.savefig(path, dpi=_FIG_DPI)
    plt.close(fig)
    return str(path)


def render_drain_figures(entries, outdir):
    """Current/operation-time bars and the SoC timelines, as PNG files."""
    rows = drain_table_rows(entries)
    labels = [r["label"] for r in rows]
    threshold_ma = entries[0][1].parasitic_threshold_a * 1e3 if entries else 30.0
    written = []

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(range(len(rows)), [r["mean_current_ma"] for r in rows], color="#47608a")
    ax.axhline(threshold_ma, color="#b03a2e", linestyle="--", linewidth=1,
               label=f"parasitic drain threshold ({threshold_ma:.0f} mA)")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("discharged current [mA]")
    ax.set_title("Battery drain by attack scenario")
    ax.legend(fontsize=8)
    fig.tight_layout()
    written.append(_save(fig, outdir / "currents.png"))

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(range(len(rows)), [r["operation_time_ideal_days"] for r in rows],
           color="#4a7a50")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("max. battery operation time [days]")
    ax.set_title("Time until the cold-start floor")
    fig.tight_layout()
    written.append(_save(fig, outdir / "operation_times.png"))

    fig, ax = plt.subplots(figsize=(7, 4))
    for report, battery, _baseline in entries:
        if not report.soc_timeline:
            continue
        hours = [t for t, _ in report.soc_timeline]
        soc = [s * 100 for _, s in report.soc_timeline]
        ax.plot([h / 24 for h in hours], soc, label=report.label, linewidth=1.2)
    if entries:
        ax.axhline(entries[0][1].soc_min_start * 100, color="#b03a2e",
                   linestyle="--", linewidth=1, label="cold-start floor")
    ax.set_xlabel("days parked")
    ax.set_ylabel("state of charge [%]")
    ax.set_title("State-of-charge timelines")
    ax.legend(fontsize=8)
    fig.tight_layout()
    written.append(_save(fig, outdir / "soc_timeline.png"))
    return written


# --- recon reports -----------------------------------------------------------

def render_recon_text(report):
    lines = []
    if report.single_regime:
        lines.append("single-regime trace: no ignition boundary found")
    else:
        lines.append(f"ignition boundary: {report.boundary_us / 1e6:.6f} s")
    n_off, n_on = len(report.awakened_ids), len(report.ignition_on_ids)
    lines.append(f"distinct IDs awake-while-parked: {n_off}")
    lines.append(f"distinct IDs ignition-on:        {n_on}")
    if n_on:
        lines.append(f"awakened-ID ratio:               {report.awakened_ratio_pct:.2f}%")
    masked = {i: m for i, m in report.free_run_masks.items() if m}
    lines.append(f"IDs with free-running positions: {len(masked)}")
    for can_id in sorted(masked):
        by_byte = defaultdict(list)
        for byte_index, bit in sorted(masked[can_id]):
            by_byte[byte_index].append(bit)
        desc = ", ".join(f"byte {b} bits {bits}" for b, bits in sorted(by_byte.items()))
        lines.append(f"  0x{can_id:03X}: {desc}")
    if report.skipped_ids:
        skipped = ", ".join(f"0x{i:03X}" for i in report.skipped_ids)
        lines.append(f"IDs skipped (fewer than 2 parked records): {skipped}")
    lines.append(f"control-message candidates: {len(report.candidates)}")
    for rank, c in enumerate(report.candidates, start=1):
        state = "reverted" if c.reverted else "persisted"
        lines.append(
            f"  {rank}. ID 0x{c.can_id:03X} byte {c.byte_index}: "
            f"0x{c.baseline_value:02X} -> 0x{c.event_value:02X} "
            f"at {c.event_time_us / 1e6:.6f} s ({state}, bits {list(c.bits)})"
        )
    return "\n".join(lines) + "\n"


def write_recon_csv(report, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "can_id", "byte_index", "bits",
                         "baseline_value", "event_value", "event_time_s", "reverted"])
        for rank, c in enumerate(report.candidates, start=1):
            writer.writerow([
                rank, f"0x{c.can_id:03X}", c.byte_index,
                ";".join(str(b) for b in c.bits),
                f"0x{c.baseline_value:02X}", f"0x{c.event_value:02X}",
                f"{c.event_time_us / 1e6:.6f}", int(c.reverted),
            ])


def render_recon_figure(records, report, path, window_us=1_000_000):
    """Distinct-ID count per analysis window with the detected boundary."""
    if not records:
        raise ValueError("empty trace")
    t0 = records[0].time_us
    windows = defaultdict(set)
    for rec in records:
        windows[(rec.time_us - t0) // window_us].add(rec.can_id)
    ks = range(max(windows) + 1)
    counts = [len(windows.get(k, ())) for k in ks]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.step([k * window_us / 1e6 for k in ks], counts, where="post", color="#47608a")
    if not report.single_regime:
        ax.axvline(report.boundary_us / 1e6, color="#b03a2e", linestyle="--",
                   linewidth=1, label="detected ignition boundary")
        ax.legend(fontsize=8)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("distinct IDs per window")
    ax.set_title("Bus activity across the ignition boundary")
    fig.tight_layout()
    return _save(fig, path)
