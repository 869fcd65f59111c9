"""Measured flow factors of a run and the per-run derived rates.

A run's raw counters (packets, byte lengths, arrival/service/total times)
are held in :class:`FlowFactors`; the four derived quantities (byte rate,
link capacity, arrival rate, service rate) come out of :func:`derive`.
Times are carried in milliseconds, byte lengths in bytes; the rate
operations convert to bits/second and packets/second.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields

from .errors import ValidationError

MS_PER_SECOND = 1000.0
BITS_PER_BYTE = 8

# Canonical factors-CSV header. One row per run, UTF-8, comma separated.
RUN_COLUMN = "Run"
FACTOR_COLUMNS = {
    "clients_online": "No. of Online Clients",
    "servers": "No. of Servers",
    "packets_sent": "Packet Sent (Packet)",
    "packets_sent_length": "Packet Sent Length (Byte)",
    "packets_received": "Packet Received (Packet)",
    "packets_received_length": "Packet Received Length (Byte)",
    "total_arrival_time": "Total Arrival Time (Mili Second)",
    "total_departure_time": "Total Departure Time (Mili Second)",
    "total_service_time": "Total Service Time (Mili Second)",
    "total_time": "Total Time (Mili Second)",
}
# Optional pre-computed rate columns. When a CSV carries all four, the
# reader returns them alongside the raw factors so callers can analyze
# previously published/recorded rates verbatim instead of re-deriving.
RATE_COLUMNS = {
    "arrival_rate": "Arrival Rate (Packet/Second)",
    "service_rate": "Service Rate (Packet/Second)",
    "byte_rate_bs": "Byte Size (Bit/Second)",
    "capacity_c": "Capacity (Bit/Second)",
}

_COUNT_FIELDS = (
    "clients_online",
    "servers",
    "packets_sent",
    "packets_sent_length",
    "packets_received",
    "packets_received_length",
)


@dataclass
class FlowFactors:
    """Raw counters and times measured for one run.

    ``total_departure_time`` is a sum of wall-clock departure timestamps
    (ms since epoch); it is recorded for schema fidelity but feeds no
    formula. ``total_arrival_time`` is likewise carried but unused.
    """

    run_label: str
    clients_online: int
    servers: int
    packets_sent: int
    packets_sent_length: int
    packets_received: int
    packets_received_length: int
    total_arrival_time: float
    total_departure_time: float
    total_service_time: float
    total_time: float

    def validate(self) -> None:
        """Raise ValidationError if any invariant is violated.

        Note: total_service_time <= total_time is recorded, not enforced.
        """
        for name in _COUNT_FIELDS:
            if getattr(self, name) < 0:
                raise ValidationError(f"{self.run_label!r}: {name} must be >= 0")
        for name in ("total_arrival_time", "total_departure_time"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{self.run_label!r}: {name} must be >= 0")
        if self.packets_received > self.packets_sent:
            raise ValidationError(
                f"{self.run_label!r}: packets_received ({self.packets_received}) "
                f"exceeds packets_sent ({self.packets_sent})"
            )
        if self.packets_received_length > self.packets_sent_length:
            raise ValidationError(
                f"{self.run_label!r}: packets_received_length "
                f"({self.packets_received_length}) exceeds packets_sent_length "
                f"({self.packets_sent_length})"
            )
        if self.total_service_time <= 0:
            raise ValidationError(f"{self.run_label!r}: total_service_time must be > 0")
        if self.total_time <= 0:
            raise ValidationError(f"{self.run_label!r}: total_time must be > 0")


@dataclass(frozen=True)
class DerivedRates:
    """The four per-run rates: BS, C (bits/s) and lambda, mu (packets/s)."""

    byte_rate_bs: float
    capacity_c: float
    arrival_rate: float
    service_rate: float


def compute_byte_rate(opl: float, total_time: float) -> float:
    """Byte rate BS in bits/second: received payload over total run time."""
    if total_time <= 0:
        raise ValidationError(f"total_time must be > 0, got {total_time}")
    return BITS_PER_BYTE * opl / (total_time / MS_PER_SECOND)


def compute_capacity(opl: float, total_service_time: float) -> float:
    """Link capacity C in bits/second: received payload over summed service time."""
    if total_service_time <= 0:
        raise ValidationError(f"total_service_time must be > 0, got {total_service_time}")
    return BITS_PER_BYTE * opl / (total_service_time / MS_PER_SECOND)


def compute_arrival_rate(packets_received: float, total_time: float) -> float:
    """Arrival rate in packets/second over the total run time."""
    if total_time <= 0:
        raise ValidationError(f"total_time must be > 0, got {total_time}")
    return packets_received / (total_time / MS_PER_SECOND)


def compute_service_rate(packets_received: float, total_service_time: float) -> float:
    """Service rate in packets/second over the summed service time."""
    if total_service_time <= 0:
        raise ValidationError(f"total_service_time must be > 0, got {total_service_time}")
    return packets_received / (total_service_time / MS_PER_SECOND)


def derive(f: FlowFactors) -> DerivedRates:
    """Compute all four rates from one run's factors.

    OPL (the byte numerator of BS and C) is packets_received_length.
    """
    opl = f.packets_received_length
    return DerivedRates(
        byte_rate_bs=compute_byte_rate(opl, f.total_time),
        capacity_c=compute_capacity(opl, f.total_service_time),
        arrival_rate=compute_arrival_rate(f.packets_received, f.total_time),
        service_rate=compute_service_rate(f.packets_received, f.total_service_time),
    )


@dataclass
class FactorsRow:
    """One factors-CSV row: raw factors plus any pre-computed rates."""

    factors: FlowFactors
    rates: DerivedRates | None = field(default=None)

    def effective_rates(self) -> DerivedRates:
        """Rates recorded in the row, or derived from the raw factors."""
        return self.rates if self.rates is not None else derive(self.factors)


def write_factors_csv(path, rows, include_rates: bool = False) -> None:
    """Write runs to a factors CSV.

    ``rows`` may hold FlowFactors or FactorsRow items. With
    ``include_rates`` the four rate columns are appended, taken from the
    row's recorded rates or derived on the fly.
    """
    normalized = [r if isinstance(r, FactorsRow) else FactorsRow(r) for r in rows]
    header = [RUN_COLUMN, *FACTOR_COLUMNS.values()]
    if include_rates:
        header += list(RATE_COLUMNS.values())
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in normalized:
            f = row.factors
            record = [f.run_label]
            record += [repr(getattr(f, name)) for name in FACTOR_COLUMNS]
            if include_rates:
                rates = row.effective_rates()
                record += [repr(getattr(rates, name)) for name in RATE_COLUMNS]
            writer.writerow(record)


def _parse_cell(raw: str, column: str, line: int, kind):
    text = raw.strip()
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(
            f"line {line}, column {column!r}: cannot parse {raw!r} as a number"
        ) from None
    if kind is int:
        if value != int(value):
            raise ValidationError(
                f"line {line}, column {column!r}: expected an integer count, got {raw!r}"
            )
        return int(value)
    return value


def read_factors_csv(path) -> list[FactorsRow]:
    """Read a factors CSV, validating every run.

    Raises ValidationError with line/column diagnostics on malformed
    input. If all four rate columns are present and populated, each row
    also carries the recorded rates.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValidationError(f"{path}: empty CSV, expected a header row")
        missing = [c for c in (RUN_COLUMN, *FACTOR_COLUMNS.values()) if c not in reader.fieldnames]
        if missing:
            raise ValidationError(f"{path}: missing column(s) {', '.join(repr(c) for c in missing)}")
        has_rates = all(c in reader.fieldnames for c in RATE_COLUMNS.values())
        rows: list[FactorsRow] = []
        for line, record in enumerate(reader, start=2):
            label = (record.get(RUN_COLUMN) or "").strip()
            if not label:
                raise ValidationError(f"line {line}, column {RUN_COLUMN!r}: empty run label")
            kwargs = {"run_label": label}
            for name, column in FACTOR_COLUMNS.items():
                kind = int if name in _COUNT_FIELDS else float
                kwargs[name] = _parse_cell(record[column] or "", column, line, kind)
            factors = FlowFactors(**kwargs)
            factors.validate()
            rates = None
            if has_rates and all((record[c] or "").strip() for c in RATE_COLUMNS.values()):
                rates = DerivedRates(
                    **{
                        name: _parse_cell(record[column], column, line, float)
                        for name, column in RATE_COLUMNS.items()
                    }
                )
            rows.append(FactorsRow(factors, rates))
    return rows


def factors_field_names() -> list[str]:
    """Field names of FlowFactors, in declaration order."""
    return [f.name for f in fields(FlowFactors)]
