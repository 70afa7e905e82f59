"""Result bundles and their text, JSON and CSV renderings."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import SUMMARY_ROWS

STAT_FMT = "{:.6f}"
MISSING = "."
RAW_TABLE_MAX_G = 52

_VAR_PREFIX = {"CV1": "cv1", "CV3": "cv3", "CV3J": "cv3J"}
_COLUMN_KEYS = {"Ng": "ng", "Leverage": "leverage", "Partial L.": "partlev",
                "beta no g": "betanog"}
_ALT_ROWS = (
    ("Harmonic Mean", "harmonic"),
    ("Harmonic Ratio", "harmonic_ratio"),
    ("Geometric Mean", "geometric"),
    ("Geometric Ratio", "geometric_ratio"),
    ("Quadratic Mean", "quadratic"),
    ("Quadratic Ratio", "quadratic_ratio"),
)


@dataclass
class RegressionRow:
    method: str
    coef: float
    se: float | None
    t: float | None
    p: float
    lci: float
    uci: float


@dataclass
class OutputBundle:
    """Everything a summary run reports, independent of the output format."""

    coef_name: str
    cluster_name: str
    N: int
    G: int
    regression_table: list
    variability_table: dict
    cluster_labels: list
    cluster_columns: dict
    per_cluster: bool = False
    alt_means_table: dict | None = None
    gstar_block: dict | None = None
    warnings: list = field(default_factory=list)


def build_bundle(est, *, cluster_name="cluster", table=False, svars=False, gstar=False):
    """Collect the reported quantities from a fitted :class:`ClusterSummary`."""
    rows = []
    for v in (est.cv1_, est.cv3_, est.cv3j_):
        if v is None:
            continue
        rows.append(RegressionRow(v.kind, float(v.beta_hat[v.j]), v.se_j, v.t_j, v.p_j,
                                  v.ci_j[0], v.ci_j[1]))
    if est.wcr_ is not None:
        lci, uci = est.wcr_.ci if est.wcr_.ci is not None else (np.nan, np.nan)
        rows.append(RegressionRow("WCR", float(est.cv1_.beta_hat[est.cv1_.j]), None, None,
                                  est.wcr_.p_value, lci, uci))

    diag = est.diagnostics_
    columns = diag.columns()
    variability = {name: s.as_dict() for name, s in diag.summaries().items()}
    alt = None
    if svars:
        alt = {name: m.as_dict() for name, m in diag.alt_means().items()}

    block = None
    if gstar or est.rho is not None:
        ec = est.effective_clusters_
        block = {"gstarzero": ec.gstar0, "gstarone": ec.gstar1, "rho": ec.rho,
                 "gstarrho": ec.gstar_rho, "fe_nested": ec.fe_nested}

    return OutputBundle(
        coef_name=est.coef_name_,
        cluster_name=cluster_name,
        N=est.design_.N,
        G=est.design_.G,
        regression_table=rows,
        variability_table=variability,
        cluster_labels=list(diag.labels),
        cluster_columns=columns,
        per_cluster=table,
        alt_means_table=alt,
        gstar_block=block,
        warnings=list(est.warnings_),
    )


def _fmt(value, fmt=STAT_FMT):
    if value is None:
        return MISSING
    value = float(value)
    if math.isnan(value):
        return MISSING
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return fmt.format(value)


def _rule(width):
    return "-" * width


def _table(title, stub_name, stub_width, headers, rows, footer=None):
    widths = [max(12, len(h) + 2) for h in headers]
    head = f"{stub_name:>{stub_width}} |" + "".join(f"{h:>{w}}" for h, w in zip(headers, widths))
    width = len(head)
    lines = [title, head, "-" * (stub_width + 1) + "+" + _rule(width - stub_width - 2)]
    for stub, cells in rows:
        lines.append(f"{stub:>{stub_width}} |" + "".join(f"{c:>{w}}" for c, w in zip(cells, widths)))
    if footer:
        lines.append("-" * (stub_width + 1) + "+" + _rule(width - stub_width - 2))
        for stub, cells in footer:
            lines.append(f"{stub:>{stub_width}} |" + "".join(f"{c:>{w}}" for c, w in zip(cells, widths)))
    lines.append(_rule(width))
    return lines


def render_text(bundle):
    out = [
        f"Cluster summary statistics for {bundle.coef_name} when clustered by "
        f"{bundle.cluster_name}.",
        f"There are {bundle.N} observations within {bundle.G} {bundle.cluster_name} clusters.",
        "",
    ]
    reg_rows = [
        (r.method, [_fmt(r.coef), _fmt(r.se), _fmt(r.t), _fmt(r.p), _fmt(r.lci), _fmt(r.uci)])
        for r in bundle.regression_table
    ]
    out += _table("Regression Output", "s.e.", 6,
                  ["Coeff", "Sd. Err.", "t-stat", "P value", "CI-lower", "CI-upper"], reg_rows)
    out.append("")

    names = list(bundle.variability_table)
    body = [(stat, [_fmt(bundle.variability_table[n][stat]) for n in names])
            for stat in SUMMARY_ROWS if stat != "coefvar"]
    foot = [("coefvar", [_fmt(bundle.variability_table[n]["coefvar"]) for n in names])]
    out += _table("Cluster Variability", "Statistic", 10, names, body, foot)

    if bundle.per_cluster:
        out.append("")
        out += _per_cluster_lines(bundle)
    if bundle.alt_means_table is not None:
        out.append("")
        alt_names = list(bundle.alt_means_table)
        rows = [(label, [_fmt(bundle.alt_means_table[n][key]) for n in alt_names])
                for label, key in _ALT_ROWS]
        out += _table("Alternative Sample Means and Ratios to Arithmetic Mean", "", 15,
                      alt_names, rows)
    if bundle.gstar_block is not None:
        out.append("")
        out += _gstar_lines(bundle.gstar_block)
    for w in bundle.warnings:
        out.append(f"Warning: {w}")
    return "\n".join(out) + "\n"


def _per_cluster_lines(bundle):
    cols = bundle.cluster_columns
    names = list(cols)
    if bundle.G > RAW_TABLE_MAX_G:
        lines = ["Cluster by Cluster Statistics (unformatted matrix: "
                 + ", ".join([bundle.cluster_name, *names]) + ")"]
        for g, label in enumerate(bundle.cluster_labels):
            lines.append(" ".join([str(label)] + [repr(float(cols[n][g])) for n in names]))
        return lines
    rows = []
    for g, label in enumerate(bundle.cluster_labels):
        cells = [str(int(cols[n][g])) if n == "Ng" else _fmt(cols[n][g]) for n in names]
        rows.append((str(label), cells))
    stub = max(10, len(bundle.cluster_name), *(len(str(lbl)) for lbl in bundle.cluster_labels))
    return _table("Cluster by Cluster Statistics", bundle.cluster_name, stub, names, rows)


def _rho_label(rho):
    text = f"{rho:g}"
    return text[1:] if text.startswith("0.") else text


def _gstar_lines(block):
    lines = ["Effective Number of Clusters", _rule(29)]
    lines.append(f"G*(0)  =  {_fmt(block['gstarzero'])}")
    rho = block["rho"]
    nested_note = "cannot be computed with fixed effects nested within clusters"
    if rho is not None and rho not in (0.0, 1.0):
        label = f"G*({_rho_label(rho)})"
        value = _fmt(block["gstarrho"]) if block["gstarrho"] is not None else nested_note
        lines.append(f"{label:<6} =  {value}")
    if block["gstarone"] is not None:
        lines.append(f"G*(1)  =  {_fmt(block['gstarone'])}")
    else:
        lines.append(f"G*(1)  {nested_note}")
    lines.append(_rule(29))
    return lines


def _json_value(value):
    if value is None:
        return None
    value = float(value)
    if math.isnan(value):
        return None
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def bundle_to_dict(bundle):
    """Flat dictionary keyed like the stored results of the Stata command."""
    out = {"coefname": bundle.coef_name, "cluster": bundle.cluster_name,
           "N": bundle.N, "G": bundle.G}
    for r in bundle.regression_table:
        if r.method == "WCR":
            out.update(wcrp=_json_value(r.p), wcrlci=_json_value(r.lci),
                       wcruci=_json_value(r.uci))
            continue
        pre = _VAR_PREFIX[r.method]
        out["beta"] = _json_value(r.coef)
        out.update({pre + "se": _json_value(r.se), pre + "t": _json_value(r.t),
                    pre + "p": _json_value(r.p), pre + "lci": _json_value(r.lci),
                    pre + "uci": _json_value(r.uci)})
    if bundle.gstar_block is not None:
        for key in ("gstarzero", "gstarone", "gstarrho"):
            out[key] = _json_value(bundle.gstar_block[key])
        out["rho"] = bundle.gstar_block["rho"]
    out["clusters"] = [_label(lbl) for lbl in bundle.cluster_labels]
    for name, key in _COLUMN_KEYS.items():
        col = bundle.cluster_columns.get(name)
        out[key] = None if col is None else [_json_value(v) for v in col]
    out["variability"] = {
        name: {stat: _json_value(v) for stat, v in stats.items()}
        for name, stats in bundle.variability_table.items()
    }
    if bundle.alt_means_table is not None:
        out["svars"] = {
            name: {k: _json_value(v) for k, v in stats.items()}
            for name, stats in bundle.alt_means_table.items()
        }
    out["warnings"] = list(bundle.warnings)
    return out


def _label(value):
    if isinstance(value, np.generic):
        return value.item()
    return value


def render_json(bundle):
    return json.dumps(bundle_to_dict(bundle), indent=2) + "\n"


CSV_FIELDS = ("table", "row", "column", "value")


def _csv_number(value):
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return ""
    return f"{value:.17g}"


def render_csv(bundle):
    """Long-format CSV (table, row, column, value) with round-trippable numbers."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in bundle.regression_table:
        for col in ("coef", "se", "t", "p", "lci", "uci"):
            writer.writerow(["regression", r.method, col, _csv_number(getattr(r, col))])
    for name, stats in bundle.variability_table.items():
        for stat, v in stats.items():
            writer.writerow(["variability", stat, name, _csv_number(v)])
    for g, label in enumerate(bundle.cluster_labels):
        for name, col in bundle.cluster_columns.items():
            writer.writerow(["cluster", label, name, _csv_number(col[g])])
    if bundle.alt_means_table is not None:
        for name, stats in bundle.alt_means_table.items():
            for key, v in stats.items():
                writer.writerow(["svars", key, name, _csv_number(v)])
    if bundle.gstar_block is not None:
        for key in ("gstarzero", "gstarone", "gstarrho"):
            writer.writerow(["gstar", key, "value", _csv_number(bundle.gstar_block[key])])
    return buf.getvalue()


def read_csv_table(text):
    """Parse :func:`render_csv` output into ``{(table, row, column): value}``."""
    reader = csv.DictReader(io.StringIO(text))
    return {
        (rec["table"], rec["row"], rec["column"]):
            float(rec["value"]) if rec["value"] != "" else np.nan
        for rec in reader
    }


RENDERERS = {"text": render_text, "json": render_json, "csv": render_csv}


def render(bundle, fmt="text"):
    try:
        return RENDERERS[fmt](bundle)
    except KeyError:
        raise ValueError(f"unknown output format {fmt!r}") from None
