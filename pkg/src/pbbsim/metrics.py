"""Delivery ratio and latency statistics, stratified by mixer count.

A WRITE counts as delivered when the board applies it; a READ counts as
delivered when it reaches the board, whatever the answer. The per-kind total
ratio is the plain mean of the per-stratum ratios (0, 1, 2 and 3 mixers),
leaving out strata that saw no traffic. RESPONSE records (board back to
reader, timed from the originating READ) are reported separately as the
end-to-end read latency.
"""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path

WRITE = "WRITE"
READ = "READ"
RESPONSE = "RESPONSE"
KINDS = (WRITE, READ, RESPONSE)
REPORT_KINDS = (WRITE, READ)
STRATA = (0, 1, 2, 3)

CSV_HEADER = [
    "scenario", "seed", "kind", "stratum", "created", "delivered",
    "ratio", "latency_mean", "latency_median",
]


class MetricsError(Exception):
    """Inconsistent lifecycle events; always a simulator bug."""


@dataclass
class DeliveryRecord:
    uid: int
    kind: str
    mixers_used: int
    created_at: float
    delivered_at: float | None = None

    @property
    def latency(self) -> float | None:
        if self.delivered_at is None:
            return None
        return self.delivered_at - self.created_at


class MetricsLog:
    def __init__(self):
        self.records: dict[int, DeliveryRecord] = {}

    def __len__(self) -> int:
        return len(self.records)

    def record_created(self, uid: int, kind: str, mixers_used: int, created_at: float) -> None:
        if kind not in KINDS:
            raise MetricsError(f"unknown kind {kind!r}")
        if mixers_used not in STRATA:
            raise MetricsError(f"mixers_used {mixers_used} outside 0..3")
        if uid in self.records:
            raise MetricsError(f"uid {uid} created twice")
        self.records[uid] = DeliveryRecord(uid, kind, mixers_used, created_at)

    def record_delivered(self, uid: int, time: float) -> None:
        rec = self.records.get(uid)
        if rec is None:
            raise MetricsError(f"delivery of unknown uid {uid}")
        if rec.delivered_at is not None:
            raise MetricsError(f"uid {uid} delivered twice")
        if time < rec.created_at:
            raise MetricsError(f"uid {uid} delivered before it was created")
        rec.delivered_at = time

    def counts(self, kind: str) -> tuple[int, int]:
        recs = [r for r in self.records.values() if r.kind == kind]
        return len(recs), sum(r.delivered_at is not None for r in recs)


@dataclass(frozen=True)
class StratumStats:
    created: int
    delivered: int
    ratio: float | None
    latency_mean: float | None
    latency_median: float | None

    @classmethod
    def from_latencies(cls, created: int, latencies: list[float]) -> "StratumStats":
        return cls(
            created=created,
            delivered=len(latencies),
            ratio=len(latencies) / created if created else None,
            latency_mean=math.fsum(latencies) / len(latencies) if latencies else None,
            latency_median=statistics.median(latencies) if latencies else None,
        )


@dataclass
class Report:
    scenario: str
    seed: int
    config_digest: str
    strata: dict[str, list[StratumStats]] = field(default_factory=dict)
    totals: dict[str, StratumStats] = field(default_factory=dict)

    def rows(self, kinds=REPORT_KINDS) -> list[list[str]]:
        out = []
        for kind in kinds:
            for k, st in enumerate(self.strata[kind]):
                out.append(self._row(kind, str(k), st))
            out.append(self._row(kind, "total", self.totals[kind]))
        return out

    def _row(self, kind: str, stratum: str, st: StratumStats) -> list[str]:
        return [
            self.scenario, str(self.seed), kind, stratum, str(st.created),
            str(st.delivered), _fmt(st.ratio), _fmt(st.latency_mean),
            _fmt(st.latency_median),
        ]


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def compute_report(
    log: MetricsLog, scenario: str = "", seed: int = 0, config_digest: str = ""
) -> Report:
    report = Report(scenario, seed, config_digest)
    for kind in KINDS:
        per = []
        union: list[float] = []
        for k in STRATA:
            recs = [r for r in log.records.values() if r.kind == kind and r.mixers_used == k]
            lat = [r.latency for r in recs if r.latency is not None]
            per.append(StratumStats.from_latencies(len(recs), lat))
            union.extend(lat)
        present = [s.ratio for s in per if s.ratio is not None]
        base = StratumStats.from_latencies(sum(s.created for s in per), union)
        report.strata[kind] = per
        report.totals[kind] = StratumStats(
            created=base.created,
            delivered=base.delivered,
            ratio=math.fsum(present) / len(present) if present else None,
            latency_mean=base.latency_mean,
            latency_median=base.latency_median,
        )
    return report


def report_csv(report: Report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(report.rows())
    return buf.getvalue()


def report_text(report: Report) -> str:
    lines = [
        f"scenario: {report.scenario}",
        f"seed: {report.seed}",
        f"config digest: {report.config_digest}",
        "",
        "ratio = delivered/created per stratum; total ratio = mean of strata with traffic",
        "",
    ]
    lines += _table(report, REPORT_KINDS)
    lines += [
        "",
        "end-to-end reads (READ creation to RESPONSE arrival at the reader):",
    ]
    lines += _table(report, (RESPONSE,))
    return "\n".join(lines) + "\n"


def _table(report: Report, kinds) -> list[str]:
    head = f"{'kind':<9}{'stratum':>8}{'created':>9}{'deliv.':>8}{'ratio':>10}{'mean(s)':>13}{'median(s)':>13}"
    out = [head, "-" * len(head)]
    for row in report.rows(kinds):
        _, _, kind, stratum, created, delivered, ratio, mean, median = row
        out.append(
            f"{kind:<9}{stratum:>8}{created:>9}{delivered:>8}{ratio or '-':>10}"
            f"{mean or '-':>13}{median or '-':>13}"
        )
    return out


def write_report(report: Report, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, txt_path = out / "report.csv", out / "report.txt"
    csv_path.write_text(report_csv(report), encoding="utf-8")
    txt_path.write_text(report_text(report), encoding="utf-8")
    return [csv_path, txt_path]


# -- reading reports back ----------------------------------------------------


def read_report_csv(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise MetricsError(f"{path}: unexpected header {header}")
        return [dict(zip(CSV_HEADER, row)) for row in reader]


def aggregate_rows(tables: list[list[dict[str, str]]], scenario: str) -> str:
    """Mean of every numeric column across per-seed report tables.

    Blank cells (absent statistics) are skipped; a cell absent in every seed
    stays blank.
    """
    if not tables:
        raise MetricsError("nothing to aggregate")
    keys = [(r["kind"], r["stratum"]) for r in tables[0]]
    for t in tables[1:]:
        if [(r["kind"], r["stratum"]) for r in t] != keys:
            raise MetricsError("report tables have different row layouts")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for i, (kind, stratum) in enumerate(keys):
        row = [scenario, "mean", kind, stratum]
        for col in CSV_HEADER[4:]:
            vals = [float(t[i][col]) for t in tables if t[i][col] != ""]
            row.append(_fmt(math.fsum(vals) / len(vals)) if vals else "")
        w.writerow(row)
    return buf.getvalue()


COMPARE_METRICS = ("ratio", "latency_mean", "latency_median")


def compare_tables(a: list[dict[str, str]], b: list[dict[str, str]]) -> str:
    """Per (kind, stratum, metric): value in A, value in B, B-A and B/A."""
    ka = [(r["kind"], r["stratum"]) for r in a]
    kb = [(r["kind"], r["stratum"]) for r in b]
    if ka != kb:
        raise MetricsError("reports do not have matching kind/stratum rows")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "stratum", "metric", "a", "b", "delta", "ratio"])
    for ra, rb in zip(a, b):
        for m in COMPARE_METRICS:
            va, vb = ra[m], rb[m]
            delta = ratio = ""
            if va != "" and vb != "":
                fa, fb = float(va), float(vb)
                delta = _fmt(fb - fa)
                ratio = _fmt(fb / fa) if fa != 0 else ""
            w.writerow([ra["kind"], ra["stratum"], m, va, vb, delta, ratio])
    return buf.getvalue()
