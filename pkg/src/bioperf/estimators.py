"""Utilization/idle estimators and the side-by-side comparison report.

Two routes to the same question: the bio-computing estimate takes the
ratio of mean byte rate to mean capacity across runs; the queueing
baseline is a single-server M/M/1 on the ratio of mean arrival rate to
mean service rate. ``compare`` lines the two up.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from statistics import fmean

from .errors import ValidationError
from .flow_metrics import DerivedRates


@dataclass(frozen=True)
class BioEstimate:
    """Aggregate utilization from byte-rate/capacity means."""

    avg_bs: float
    avg_c: float
    utilization_q: float
    idle: float
    constraint_ok: bool  # mean byte rate within mean capacity


@dataclass(frozen=True)
class LittlesModel:
    """Single-server M/M/1 summary; L = lambda * W holds when stable."""

    arrival_rate: float
    service_rate: float
    rho: float
    l_system: float
    w_system: float
    stable: bool
    servers: int = 1


@dataclass(frozen=True)
class ComparisonReport:
    bio: BioEstimate
    littles: LittlesModel
    diff_utilization: float
    diff_percent: float


def bio_utilization(runs) -> BioEstimate:
    """Aggregate response over a set of runs: mean BS over mean C.

    Idle time is the exact complement of utilization.
    """
    runs = list(runs)
    if not runs:
        raise ValidationError("bio_utilization needs at least one run")
    avg_bs = fmean(r.byte_rate_bs for r in runs)
    avg_c = fmean(r.capacity_c for r in runs)
    if avg_c <= 0:
        raise ValidationError("mean capacity must be > 0")
    utilization = avg_bs / avg_c
    return BioEstimate(
        avg_bs=avg_bs,
        avg_c=avg_c,
        utilization_q=utilization,
        idle=1.0 - utilization,
        constraint_ok=avg_bs <= avg_c,
    )


def littles_law(arrival_rate: float, service_rate: float) -> LittlesModel:
    """M/M/1 occupancy: rho, expected packets in system, expected seconds
    in system. rho >= 1 is flagged unstable with infinite L and W."""
    if service_rate <= 0:
        raise ValidationError(f"service rate must be > 0, got {service_rate}")
    if arrival_rate < 0:
        raise ValidationError(f"arrival rate must be >= 0, got {arrival_rate}")
    rho = arrival_rate / service_rate
    if rho >= 1.0:
        return LittlesModel(arrival_rate, service_rate, rho, math.inf, math.inf, stable=False)
    w = 1.0 / (service_rate - arrival_rate)
    return LittlesModel(arrival_rate, service_rate, rho, arrival_rate * w, w, stable=True)


def littles_from_runs(runs) -> LittlesModel:
    """Queueing baseline over runs: ratio of mean arrival rate to mean
    service rate (not the mean of per-run ratios)."""
    runs = list(runs)
    if not runs:
        raise ValidationError("littles_from_runs needs at least one run")
    return littles_law(
        fmean(r.arrival_rate for r in runs),
        fmean(r.service_rate for r in runs),
    )


def compare(bio: BioEstimate, littles: LittlesModel) -> ComparisonReport:
    diff = abs(bio.utilization_q - littles.rho)
    return ComparisonReport(bio, littles, diff, 100.0 * diff)


# --- rendering -------------------------------------------------------------

_COMPARISON_HEADER = ("Average Performance", "Bio-computing", "Little's Law", "Difference")


def _comparison_rows(report: ComparisonReport) -> list[tuple[str, str, str, str]]:
    bio, littles = report.bio, report.littles
    return [
        (
            "Utilization",
            f"{bio.utilization_q:.9f}",
            f"{littles.rho:.9f}",
            f"{report.diff_utilization:.9f}",
        ),
        (
            "Expected idle time",
            f"{bio.idle:.9f}",
            f"{1.0 - littles.rho:.9f}",
            f"{report.diff_utilization:.9f}",
        ),
    ]


def comparison_text(report: ComparisonReport) -> str:
    """Aligned text table with the utilization and idle-time rows."""
    rows = [_COMPARISON_HEADER, *_comparison_rows(report)]
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = ["   ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows]
    lines.append(f"Difference in percent: {report.diff_percent:.3f}%")
    return "\n".join(lines)


def bio_text(est: BioEstimate) -> str:
    lines = [
        f"Average byte size arrive per time unit BS   {est.avg_bs:.9g}",
        f"Capacity C per time unit                    {est.avg_c:.9g}",
        f"Total aggregate response (Utilization)      {est.utilization_q:.9f}",
        f"Expected idle time                          {est.idle:.9f}",
        f"No. of Servers                              1",
    ]
    if not est.constraint_ok:
        lines.append("WARNING: mean byte rate exceeds mean capacity (BS > C)")
    return "\n".join(lines)


def littles_text(model: LittlesModel) -> str:
    lines = [
        f"Arrival rate (packets/second)   {model.arrival_rate:.9g}",
        f"Service rate (packets/second)   {model.service_rate:.9g}",
        f"Utilization rho                 {model.rho:.9f}",
    ]
    if model.stable:
        lines += [
            f"Expected packets in system L    {model.l_system:.9g}",
            f"Expected time in system W (s)   {model.w_system:.9g}",
        ]
    else:
        lines.append("UNSTABLE: rho >= 1, L and W are unbounded")
    return "\n".join(lines)


def write_comparison_csv(report: ComparisonReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_COMPARISON_HEADER)
        writer.writerows(_comparison_rows(report))


def bio_to_dict(est: BioEstimate) -> dict:
    return {
        "avg_bs": est.avg_bs,
        "avg_c": est.avg_c,
        "utilization_q": est.utilization_q,
        "idle": est.idle,
        "constraint_ok": est.constraint_ok,
    }


def littles_to_dict(model: LittlesModel) -> dict:
    return {
        "arrival_rate": model.arrival_rate,
        "service_rate": model.service_rate,
        "rho": model.rho,
        "l_system": None if math.isinf(model.l_system) else model.l_system,
        "w_system": None if math.isinf(model.w_system) else model.w_system,
        "stable": model.stable,
        "servers": model.servers,
    }


def comparison_to_dict(report: ComparisonReport, inputs=None) -> dict:
    """JSON-ready record with both estimates; ``inputs`` may carry the
    per-run rates (label -> DerivedRates or plain dict) that fed them."""
    record = {
        "bio": bio_to_dict(report.bio),
        "littles": littles_to_dict(report.littles),
        "diff_utilization": report.diff_utilization,
        "diff_percent": report.diff_percent,
    }
    if inputs is not None:
        record["inputs"] = {
            label: (
                {
                    "byte_rate_bs": rates.byte_rate_bs,
                    "capacity_c": rates.capacity_c,
                    "arrival_rate": rates.arrival_rate,
                    "service_rate": rates.service_rate,
                }
                if isinstance(rates, DerivedRates)
                else rates
            )
            for label, rates in inputs.items()
        }
    return record
