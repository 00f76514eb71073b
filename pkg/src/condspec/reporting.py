"""Rendering of Monte Carlo and GCI reports as text tables, CSV and JSON.

Rates are printed with 6 significant digits. JSON additionally carries the
exact integer counts each rate is computed from, so :func:`parse_json_report`
reconstructs reports exactly.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

from . import __version__
from .conditional_mc import MCReport
from .gci import GciReport

__all__ = [
    "CSV_COLUMNS",
    "GCI_COLUMNS",
    "FORMATS",
    "RunManifest",
    "report_row",
    "emit_report",
    "render",
    "parse_json_report",
]

FORMATS = ("table", "csv", "json")

CSV_COLUMNS = (
    "scenario_id", "rho", "n", "R", "pass_rate",
    "cond_reject", "cond_reject_lo", "cond_reject_hi",
    "cond_cover", "cond_cover_lo", "cond_cover_hi",
    "uncond_reject", "uncond_cover", "invalid_count",
)

GCI_COLUMNS = ("case", "dim", "sets", "draws", "p_joint", "p_E", "p_F", "margin", "se_margin", "z")

_MC_COUNTS = ("reps_total", "invalid_count", "reps_passed", "cond_rejections", "cond_covers",
              "uncond_rejections", "uncond_covers")
_GCI_COUNTS = ("n11", "n10", "n01", "n00")


@dataclass(frozen=True)
class RunManifest:
    config_digest: str
    tool_version: str = __version__
    started: str = ""
    finished: str = ""
    worker_count: int = 1

    def to_dict(self):
        return asdict(self)


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, int) and not isinstance(x, bool):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6g}"


def report_row(report) -> dict:
    """Column name -> value for one report (numbers unformatted)."""
    if isinstance(report, GciReport):
        se = report.se_margin
        return {
            "case": report.case, "dim": report.dim, "sets": report.kinds, "draws": report.draws,
            "p_joint": report.p_joint, "p_E": report.p_E, "p_F": report.p_F,
            "margin": report.margin, "se_margin": se,
            "z": report.margin / se if se > 0 else math.nan,
        }
    lo_r, hi_r = report.conditional_rejection_interval
    lo_c, hi_c = report.conditional_coverage_interval
    return {
        "scenario_id": report.scenario_id, "rho": report.rho, "n": report.n, "R": report.reps_total,
        "pass_rate": report.pass_rate,
        "cond_reject": report.conditional_rejection, "cond_reject_lo": lo_r, "cond_reject_hi": hi_r,
        "cond_cover": report.conditional_coverage, "cond_cover_lo": lo_c, "cond_cover_hi": hi_c,
        "uncond_reject": report.unconditional_rejection, "uncond_cover": report.unconditional_coverage,
        "invalid_count": report.invalid_count,
    }


def _columns(reports, kind):
    if kind == "gci" or (reports and isinstance(reports[0], GciReport)):
        return GCI_COLUMNS
    return CSV_COLUMNS


def _csv(reports, columns):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(columns)
    for r in reports:
        row = report_row(r)
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _table(reports, columns):
    rows = [[_fmt(report_row(r)[c]) for c in columns] for r in reports]
    widths = [max([len(c)] + [len(row[i]) for row in rows]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in rows]
    return "\n".join(lines) + "\n"


def _json_value(x):
    if isinstance(x, (str, int)):
        return x
    return float(_fmt(x))


def _json(reports, columns, manifest):
    items = []
    for r in reports:
        row = report_row(r)
        item = {c: _json_value(row[c]) for c in columns}
        counts = _GCI_COUNTS if isinstance(r, GciReport) else _MC_COUNTS
        item["exact"] = {k: getattr(r, k) for k in counts}
        if isinstance(r, MCReport):
            item["exact"].update(rho=r.rho, level=r.level)
        items.append(item)
    kind = "gci" if columns is GCI_COLUMNS else "scenario"
    doc = {"kind": kind, "reports": items}
    if manifest is not None:
        doc["manifest"] = manifest.to_dict()
    return json.dumps(doc, indent=2, allow_nan=True) + "\n"


def render(reports, fmt: str = "table", manifest: RunManifest | None = None, kind: str | None = None) -> str:
    """Render a list of reports (all MC or all GCI) in ``fmt``."""
    reports = list(reports)
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {', '.join(FORMATS)}")
    columns = _columns(reports, kind)
    if fmt == "csv":
        return _csv(reports, columns)
    if fmt == "json":
        return _json(reports, columns, manifest)
    return _table(reports, columns)


def emit_report(reports, fmt: str = "table", destination=None, manifest: RunManifest | None = None,
                kind: str | None = None) -> str:
    """Render and write to ``destination`` (a path, a file object or None for no write)."""
    if isinstance(reports, (MCReport, GciReport)):
        reports = [reports]
    text = render(reports, fmt, manifest, kind)
    if destination is None:
        return text
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        newline = "" if fmt == "csv" else None
        with open(destination, "w", encoding="utf-8", newline=newline) as fh:
            fh.write(text)
    return text


def parse_json_report(text: str) -> list:
    """Inverse of the JSON rendering: the list of reports it describes."""
    doc = json.loads(text)
    out = []
    for item in doc["reports"]:
        exact = item["exact"]
        if doc.get("kind") == "gci":
            out.append(GciReport(dim=item["dim"], case=item["case"], kinds=item["sets"], **exact))
        else:
            out.append(MCReport(scenario_id=item["scenario_id"], n=item["n"], **exact))
    return out
