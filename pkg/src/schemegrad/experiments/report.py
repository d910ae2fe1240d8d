"""Result rows and report emission (CSV, JSON, markdown)."""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import asdict, dataclass

from ..errors import ConfigError

COLUMNS = ["experiment", "model", "metric", "value", "threshold", "cmp", "status", "informational"]


@dataclass
class ResultRow:
    experiment: str
    model: str  # compiled | handcoded_oracle | mlp | mlp_ode_rhs | hybrid
    metric: str
    value: float
    threshold: float | None = None
    cmp: str = ""  # "<=", ">=", "==" against threshold; empty for informational
    informational: bool = False

    @property
    def passed(self) -> bool:
        if self.informational or self.threshold is None:
            return True
        if self.cmp == "<=":
            return self.value <= self.threshold
        if self.cmp == ">=":
            return self.value >= self.threshold
        if self.cmp == "==":
            return self.value == self.threshold
        raise ConfigError(f"unknown comparator {self.cmp!r}")

    @property
    def status(self) -> str:
        return "info" if self.informational else ("pass" if self.passed else "FAIL")


def rows_passed(rows) -> bool:
    return all(r.passed for r in rows)


def _row_record(r: ResultRow) -> dict:
    d = asdict(r)
    d["status"] = r.status
    return d


def emit_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([
            r.experiment, r.model, r.metric, repr(r.value),
            "" if r.threshold is None else repr(r.threshold),
            r.cmp, r.status, int(r.informational),
        ])
    return buf.getvalue()


def parse_csv(text: str) -> list[ResultRow]:
    rows = []
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != COLUMNS:
        raise ConfigError(f"unexpected CSV header {header}")
    for rec in reader:
        rows.append(ResultRow(
            experiment=rec[0],
            model=rec[1],
            metric=rec[2],
            value=float(rec[3]),
            threshold=None if rec[4] == "" else float(rec[4]),
            cmp=rec[5],
            informational=bool(int(rec[7])),
        ))
    return rows


def emit_json(rows) -> str:
    return json.dumps([_row_record(r) for r in rows], indent=2, sort_keys=True) + "\n"


def emit_markdown(rows) -> str:
    lines = ["| experiment | model | metric | value | threshold | status |",
             "|---|---|---|---|---|---|"]
    for r in rows:
        thr = "" if r.threshold is None else f"{r.cmp} {r.threshold:g}"
        lines.append(
            f"| {r.experiment} | {r.model} | {r.metric} | {r.value:.6g} | {thr} | {r.status} |"
        )
    return "\n".join(lines) + "\n"


def emit_report(rows, fmt: str) -> str:
    if fmt == "csv":
        return emit_csv(rows)
    if fmt == "json":
        return emit_json(rows)
    if fmt == "markdown":
        return emit_markdown(rows)
    raise ConfigError(f"unknown report format {fmt!r}")


def write_reports(rows, out_dir: str, loss_curves: dict | None = None) -> None:
    """rows.csv / rows.json / report.md plus optional loss_curves/*.csv."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "rows.csv"), "w") as f:
        f.write(emit_csv(rows))
    with open(os.path.join(out_dir, "rows.json"), "w") as f:
        f.write(emit_json(rows))
    with open(os.path.join(out_dir, "report.md"), "w") as f:
        f.write(emit_markdown(rows))
    if loss_curves:
        curve_dir = os.path.join(out_dir, "loss_curves")
        os.makedirs(curve_dir, exist_ok=True)
        for name, curve in loss_curves.items():
            with open(os.path.join(curve_dir, f"{name}.csv"), "w") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(["epoch", "train_loss", "test_loss"])
                for rec in curve:
                    row = list(rec) + [""] * (3 - len(rec))
                    w.writerow(row)
