"""Serialization of reports: stable JSON, markdown narrative, CSV exports, schemas."""

import csv
import hashlib
import json
import math
from importlib import resources

SCHEMA_NAMES = ("fairness_report", "burden_shifting", "model", "provenance", "feasibility",
                "sweep")


def _clean(obj):
    # JSON has no NaN/inf; numpy scalars and tuples need plain types
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps(obj):
    """Deterministic JSON text (two-space indent, trailing newline)."""
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    text = dumps(obj)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def load_schema(name):
    """Return the JSON schema shipped for ``name`` (one of ``SCHEMA_NAMES``)."""
    if name not in SCHEMA_NAMES:
        raise KeyError(f"unknown schema {name!r}")
    text = resources.files("fairlend").joinpath("schemas", f"{name}.schema.json").read_text(
        encoding="utf-8")
    return json.loads(text)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows_csv(path, rows, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])


def write_frontier_csv(path, frontier):
    write_rows_csv(path, [{"strategy": c.strategy, "predictiveness": c.predictiveness,
                           "air": c.air} for c in frontier],
                   ["strategy", "predictiveness", "air"])


def _num(v, digits=4):
    return "n/a" if v is None else f"{v:.{digits}f}"


def render_markdown(report):
    """Human-readable summary of a burden-shifting report."""
    b = report.baseline
    out = ["# Burden-shifting review", "",
           f"Outcome: **{report.outcome}**", "",
           report.narrative, "",
           "## Baseline", "",
           f"- model: {b.model.kind} on {', '.join(b.model.features_)}",
           f"- decision threshold: {report.config.threshold}",
           f"- holdout accuracy: {_num(b.predictiveness)}",
           f"- AIR: {_num(b.air)}",
           f"- AUC: {_num(b.report.auc)}",
           f"- statistical parity gap: {_num(b.report.statistical_parity_gap)}",
           f"- calibration max gap: {_num(b.report.calibration.max_gap)}",
           "",
           "## Prongs", "",
           f"1. Adverse impact (AIR < {report.prong1.threshold}): "
           f"{'yes' if report.prong1.adverse_impact_found else 'no'}",
           f"2. Business need (accuracy >= {report.prong2['floor']:.4f}, "
           f"{report.prong2['floor_rule']}): "
           f"{'met' if report.prong2['business_need_met'] else 'not met'}"]
    if report.prong3 is None:
        out.append("3. Less discriminatory alternative: not searched")
    else:
        sel = report.prong3["selected"]
        out.append("3. Less discriminatory alternative: "
                   + ("none found" if sel is None else f"`{sel.strategy}`"))
        out += ["", "## Pareto frontier", "", "| strategy | accuracy | AIR |", "|---|---|---|"]
        out += [f"| {c.strategy} | {_num(c.predictiveness)} | {_num(c.air)} |"
                for c in report.prong3["frontier"]]
        failed = [c for c in report.prong3["candidates"] if c.failed]
        if failed:
            out += ["", "## Failed candidates", ""]
            out += [f"- {c.strategy}: {c.error}" for c in failed]
    out += ["", "## Proxy diagnostics", "",
            "| feature | group correlation | permutation importance | bias risk |",
            "|---|---|---|---|"]
    out += [f"| {d.feature}{' (constant)' if d.constant else ''} | {d.group_correlation:.4f} "
            f"| {d.importance:.4f} | {d.bias_risk:.4f} |" for d in report.proxy_diagnostics]
    return "\n".join(out) + "\n"
