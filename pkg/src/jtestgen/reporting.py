"""Rendering of aggregate and complexity reports (JSON, markdown, CSV)."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .code_model import Corpus
from .complexity import (
    ComplexityWeights,
    InitFeatures,
    NormalizationStats,
    bin_label,
    count_init_features,
    cyclomatic_complexity,
    fit_normalization,
    init_complexity,
)
from .errors import NoFocalCall, ParseError
from .pipeline import AggregateReport, MetricRow, SessionRecord, ccn_group
from .seed_miner import mine_source_exemplars

TABLE2_COLUMNS = ("Method", "Projects", "Focal methods", "Compile passed Rate", "Test Passed Rate", "Branch Coverage", "Line Coverage")


def pct(x: float | None) -> str:
    return "-" if x is None else f"{100 * x:.2f}%"


def _md_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines)


def _metric_cells(row: MetricRow) -> list[str]:
    return [str(row.focal_methods), pct(row.compile_pass_rate), pct(row.test_pass_rate), pct(row.branch_coverage), pct(row.line_coverage)]


def render_markdown(report: AggregateReport) -> str:
    t2 = [[report.method_label, "Total", *_metric_cells(report.total)]]
    t2 += [[report.method_label, r.label or "(unnamed)", *_metric_cells(r)] for r in report.per_project]
    bin_header = ("Initialization complexity", "Focal methods", "Compile passed Rate", "Test Passed Rate", "Branch Coverage", "Line Coverage")
    ccn_header = ("CCN", *bin_header[1:])
    parts = [
        "## Effectiveness",
        _md_table(TABLE2_COLUMNS, t2),
        "",
        "## By initialization complexity (per focal method)",
        _md_table(bin_header, [[r.label, *_metric_cells(r)] for r in report.by_init_bin]),
        "",
        "## By cyclomatic complexity",
        _md_table(ccn_header, [[r.label, *_metric_cells(r)] for r in report.by_ccn_group]),
        "",
        f"Test Passed Rate over compiled tests: {pct(report.total.test_pass_rate_over_compiled)}",
        f"Partially valid tests: {report.total.partial_valid}",
    ]
    if report.failure_classes:
        parts.append("Failures: " + ", ".join(f"{k}={v}" for k, v in sorted(report.failure_classes.items())))
    parts.append(f"Skipped malformed records: {report.skipped_records}")
    return "\n".join(parts) + "\n"


def render_sessions_csv(records: Sequence[SessionRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["signature", "project", "compiled", "tests_passed", "partial_valid", "failure_class",
                "branches_covered", "branches_total", "lines_covered", "lines_total", "ccn", "ccn_group",
                "seed_status", "seed_rounds", "iterations", "repair_attempts", "fallback_used"])
    for r in records:
        o, c = r.outcome, r.outcome.coverage
        w.writerow([r.signature, r.project, int(o.compiled), int(o.tests_passed), int(o.partial_valid), o.failure_class or "",
                    *(("", "", "", "") if c is None else (c.branches_covered, c.branches_total, c.lines_covered, c.lines_total)),
                    r.ccn, ccn_group(r.ccn), r.seed_status, r.seed_rounds, r.iterations, r.repair_attempts, int(r.fallback_used)])
    return buf.getvalue()


def dump_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_aggregate(report: AggregateReport, records: Sequence[SessionRecord], out_dir: Path) -> dict[str, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"json": out_dir / "report.json", "markdown": out_dir / "report.md", "csv": out_dir / "sessions.csv"}
    paths["json"].write_text(dump_json(report.to_dict()), encoding="utf-8")
    paths["markdown"].write_text(render_markdown(report), encoding="utf-8")
    paths["csv"].write_text(render_sessions_csv(records), encoding="utf-8")
    return paths


# --------------------------------------------------------------------------
# complexity analysis


@dataclass
class ComplexityRow:
    signature: str
    ccn: int
    features: InitFeatures | None = None
    context: str = ""  # provenance of the measured invocation context
    raw: float | None = None
    scaled: float | None = None
    bin: int | None = None


@dataclass
class ComplexityReport:
    per_focal: list[ComplexityRow] = field(default_factory=list)
    per_context: list[ComplexityRow] = field(default_factory=list)
    stats: NormalizationStats | None = None
    weights: ComplexityWeights = field(default_factory=ComplexityWeights)

    def to_dict(self) -> dict:
        def row(r: ComplexityRow) -> dict:
            f = r.features
            return {
                "signature": r.signature, "ccn": r.ccn, "context": r.context,
                **({"V": f.V, "O": f.O, "M": f.M, "P": f.P} if f else {"V": None, "O": None, "M": None, "P": None}),
                "raw": r.raw, "scaled": r.scaled, "bin": bin_label(r.bin) if r.bin is not None else "n/a",
            }

        ccn_hist: dict[str, int] = {}
        for r in self.per_focal:
            ccn_hist[str(r.ccn)] = ccn_hist.get(str(r.ccn), 0) + 1
        bins: dict[str, int] = {}
        for r in self.per_focal:
            key = bin_label(r.bin) if r.bin is not None else "n/a"
            bins[key] = bins.get(key, 0) + 1
        return {
            "per_focal_method": [row(r) for r in self.per_focal],
            "per_context": [row(r) for r in self.per_context],
            "stats": self.stats.to_dict() if self.stats else None,
            "weights": list(self.weights.as_tuple()),
            "ccn_histogram": dict(sorted(ccn_hist.items(), key=lambda kv: int(kv[0]))),
            "init_bin_histogram_per_focal_method": dict(sorted(bins.items())),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["grouping", "signature", "context", "V", "O", "M", "P", "raw", "scaled", "bin", "ccn"])
        for grouping, rows in (("per_focal_method", self.per_focal), ("per_context", self.per_context)):
            for r in rows:
                f = r.features
                w.writerow([grouping, r.signature, r.context, *((f.V, f.O, f.M, f.P) if f else ("", "", "", "")),
                            "" if r.raw is None else f"{r.raw:.6f}", "" if r.scaled is None else f"{r.scaled:.6f}",
                            bin_label(r.bin) if r.bin is not None else "n/a", r.ccn])
        return buf.getvalue()


def analyze_corpus(corpus: Corpus, weights: ComplexityWeights | None = None) -> ComplexityReport:
    """CCN for every focal method and init features for every mined caller context."""
    weights = weights or ComplexityWeights()
    report = ComplexityReport(weights=weights)
    for cls, m in corpus.focal_methods():
        ccn = cyclomatic_complexity(m)
        first = None
        for ex in mine_source_exemplars(cls, corpus.classes, m):
            try:
                f = count_init_features(ex.code, m)
            except (NoFocalCall, ParseError):
                continue
            row = ComplexityRow(m.signature, ccn, f, f"{ex.provenance[0]}:{ex.provenance[1]}")
            report.per_context.append(row)
            first = first or row
        report.per_focal.append(ComplexityRow(m.signature, ccn, first.features if first else None, first.context if first else ""))
    measured = [r.features for r in report.per_context if r.features is not None]
    if measured:
        report.stats = fit_normalization(measured)
        for r in report.per_focal + report.per_context:
            if r.features is not None:
                s = init_complexity(r.features, report.stats, weights)
                r.raw, r.scaled, r.bin = s.raw, s.scaled, s.bin
    return report
