"""Aligned text tables and CSV rows for sweep and tournament results.

Text tables use the conventional column order of the results tables; 999
marks a hyperparameter the kernel does not take. CSV report files hold the
deterministic scores only, and wall-clock timings go to a separate file so
replayed runs produce identical report CSVs.
"""

from __future__ import annotations

import csv
import io

from .experiments import EvalReport, InputSelection, TournamentResult, rank_reports
from .svr import SvrModel

NOT_APPLICABLE = 999

REPORT_FIELDS = ["rank", "model_label", "family", "error_pct", "accuracy_pct",
                 "training_error", "failure"]


def _table(header, rows) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _num(v, digits=6):
    if v != v:  # NaN
        return "failed"
    return f"{v:.{digits}g}"


def svr_table(reports: list[EvalReport], configs=None) -> str:
    """Kernel / Degree / Scale / Offset / Sigma / Max Order / Error / Accuracy / Time.

    ``configs`` (the sweep's SvrConfigs, same order) fills in hyperparameters
    for models that failed to train.
    """
    rows = []
    for i, r in enumerate(reports):
        params = {}
        if isinstance(r.model, SvrModel):
            params = r.model.config.kernel.params()
        elif configs is not None:
            params = configs[i].kernel.params()

        def col(name):
            v = params.get(name)
            return NOT_APPLICABLE if v is None else f"{v:g}"

        rows.append([r.model_label.split("(")[0], col("degree"), col("scale"), col("offset"),
                     col("sigma"), col("max_order"), _num(r.error_pct), _num(r.accuracy_pct, 4),
                     f"{r.elapsed_seconds:.1f}"])
    return _table(["Kernel", "Degree", "Scale", "Offset", "Sigma", "Max Order",
                   "Error (%)", "Accuracy (%)", "Time (s)"], rows)


def ann_table(reports: list[EvalReport]) -> str:
    """ANN / Error / Accuracy / Elapsed time."""
    rows = [[r.model_label, f"{_num(r.error_pct, 4)}%", f"{_num(r.accuracy_pct, 4)}%",
             f"{r.elapsed_seconds:.3f}s"] for r in reports]
    return _table(["ANN", "Error", "Accuracy", "Elapsed time"], rows)


def ranking_table(reports: list[EvalReport], use_elapsed: bool = False) -> str:
    rows = []
    for i, r in enumerate(rank_reports(reports, use_elapsed), start=1):
        rows.append([i if r.ok else "-", r.model_label, _num(r.error_pct),
                     _num(r.accuracy_pct, 4), _num(r.training_error)])
    return _table(["Rank", "Model", "Error (%)", "Accuracy (%)", "Training Error (%)"], rows)


def input_table(selection: InputSelection) -> str:
    words = {2: "Two", 3: "Three", 4: "Four", 5: "Five", 6: "Six", 7: "Seven", 8: "Eight"}
    rows = [[words.get(c, str(c)), f"{e:.6f}"] for c, e in selection.table]
    rows += [[words.get(c, str(c)), "excluded"] for c, _ in selection.excluded]
    return _table(["Inputs", "Training Error"], rows) + f"adopted: {selection.best} inputs\n"


def tournament_text(result: TournamentResult, fraction_tau: float | None = None) -> str:
    t = result.tolerance
    lines = [
        f"SVG  {result.svg.model_label}",
        f"ANG  {result.ang.model_label}",
        "",
        "Validation set",
        f"SVG Error     {result.svg.error_pct:.6g}%",
        f"SVG Accuracy  {result.svg.accuracy_pct:.4g}%",
        f"ANG Error     {result.ang.error_pct:.6g}%",
        f"ANG Accuracy  {result.ang.accuracy_pct:.4g}%",
        "",
        "Test set",
        f"SVG Error     {result.svg_test.error_pct:.6g}%",
        f"SVG Accuracy  {result.svg_test.accuracy_pct:.4g}%",
        f"ANG Error     {result.ang_test.error_pct:.6g}%",
        f"ANG Accuracy  {result.ang_test.accuracy_pct:.4g}%",
        "",
        f"OG   {result.og} ({result.og_report.model_label})",
        f"tau  {t.tau:.6g} ML ({t.rule})",
    ]
    if fraction_tau is not None:
        lines.append(f"tau from 19% of mean demand: {fraction_tau:.6g} ML")
    return "\n".join(lines) + "\n"


def reports_csv(reports: list[EvalReport], use_elapsed: bool = False) -> str:
    """One row per model in sweep order, with its rank under the genius ordering."""
    ranks = {id(r): i for i, r in enumerate(rank_reports(reports, use_elapsed), start=1)}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for r in reports:
        w.writerow([ranks[id(r)] if r.ok else "", r.model_label, r.family, repr(r.error_pct),
                    repr(r.accuracy_pct), repr(r.training_error), r.failure or ""])
    return buf.getvalue()


def timings_csv(reports: list[EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model_label", "elapsed_seconds"])
    for r in reports:
        w.writerow([r.model_label, f"{r.elapsed_seconds:.6f}"])
    return buf.getvalue()


def plot_csv(dates, actual, ang_pred, svg_pred) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "actual_ml", "ang_ml", "svg_ml"])
    for d, a, g, s in zip(dates, actual, ang_pred, svg_pred):
        w.writerow([d.isoformat(), repr(float(a)), repr(float(g)), repr(float(s))])
    return buf.getvalue()
