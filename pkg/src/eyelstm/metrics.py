"""RMSE / RMSPE / MAE / MAPE pooled over both coordinates, and the comparison table."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping, Optional, TextIO

import numpy as np

from .core_data import DataFormatError, fmt
from .neuralnet import DimensionError

LABEL_GUARD = 1e-8
METRICS_HEADER = ["algorithm", "dataset", "rmse", "rmspe", "mae", "mape", "n_terms", "n_skipped"]


@dataclass(frozen=True)
class MetricsReport:
    """Percentage metrics are NaN when every label falls under the near-zero guard."""

    rmse: float
    rmspe_pct: float
    mae: float
    mape_pct: float
    n_terms: int
    n_skipped: int


def evaluate(pred, truth) -> MetricsReport:
    """Score predictions against ground truth.

    Both inputs are flattened, so an (N, 2) array of points pools x and y
    terms together. Percentage metrics only use terms with
    ``|truth| >= 1e-8``; the rest are counted in ``n_skipped``.
    """
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    t = np.asarray(truth, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise DimensionError(f"prediction has {p.size} terms, truth {t.size}")
    if p.size == 0:
        raise DimensionError("nothing to evaluate")
    r = p - t
    rmse = float(np.sqrt(np.mean(r * r)))
    mae = float(np.mean(np.abs(r)))
    usable = np.abs(t) >= LABEL_GUARD
    n_ok = int(usable.sum())
    if n_ok:
        rel = r[usable] / t[usable]
        rmspe = 100.0 * float(np.sqrt(np.mean(rel * rel)))
        mape = 100.0 * float(np.mean(np.abs(rel)))
    else:
        rmspe = mape = math.nan
    return MetricsReport(rmse, rmspe, mae, mape, int(p.size), int(p.size - n_ok))


def _cell(v: float) -> str:
    return "undefined" if math.isnan(v) else f"{v:.4f}"


def best_by_rmse(results: Mapping[tuple, MetricsReport]) -> dict:
    """dataset -> algorithm with the lowest RMSE; ties go to the alphabetically first name."""
    best = {}
    for (alg, ds), rep in sorted(results.items()):
        if ds not in best or rep.rmse < results[(best[ds], ds)].rmse:
            best[ds] = alg
    return best


def compare_table(results: Mapping[tuple, MetricsReport], datasets: Optional[list] = None,
                  algorithms: Optional[list] = None) -> tuple[str, str]:
    """Render ``{(algorithm, dataset): report}`` as (aligned text, CSV).

    One row per algorithm and a four-column block per dataset; ``*`` marks the
    best RMSE in each dataset block.
    """
    if not results:
        raise ValueError("no results to tabulate")
    datasets = datasets or sorted({ds for _, ds in results}, key=str)
    algorithms = algorithms or sorted({alg for alg, _ in results}, key=str)
    best = best_by_rmse(results)
    cols = ("RMSE", "RMSPE", "MAE", "MAPE")

    head2 = [""] + [c for _ in datasets for c in cols]
    body = []
    for alg in algorithms:
        row = [alg]
        for ds in datasets:
            rep = results.get((alg, ds))
            if rep is None:
                row += ["-"] * 4
                continue
            mark = "*" if best.get(ds) == alg else ""
            row += [_cell(rep.rmse) + mark, _cell(rep.rmspe_pct), _cell(rep.mae), _cell(rep.mape_pct)]
        body.append(row)

    widths = [max(len(r[j]) for r in [head2, *body]) for j in range(len(head2))]
    widths[0] = max(widths[0], len("Algorithm"))
    lines = []
    # dataset names centred over their four-column block
    block = [sum(widths[1 + 4 * d:5 + 4 * d]) + 6 for d in range(len(datasets))]
    lines.append("Algorithm".ljust(widths[0]) + "  " + "  ".join(ds.center(block[d]) for d, ds in enumerate(datasets)))
    for row in [head2, *body]:
        lines.append("  ".join(cell.rjust(w) if j else cell.ljust(w) for j, (cell, w) in enumerate(zip(row, widths))))
    text = "\n".join(line.rstrip() for line in lines) + "\n"

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", "dataset", "rmse", "rmspe", "mae", "mape", "best"])
    for alg in algorithms:
        for ds in datasets:
            rep = results.get((alg, ds))
            if rep is not None:
                w.writerow([alg, ds, fmt(rep.rmse), fmt(rep.rmspe_pct), fmt(rep.mae), fmt(rep.mape_pct),
                            int(best.get(ds) == alg)])
    return text, buf.getvalue()


def write_metrics_csv(rows: Mapping[tuple, MetricsReport], sink: Optional[TextIO] = None) -> str:
    out = sink or io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for (alg, ds), rep in rows.items():
        w.writerow([alg, ds, fmt(rep.rmse), fmt(rep.rmspe_pct), fmt(rep.mae), fmt(rep.mape_pct),
                    rep.n_terms, rep.n_skipped])
    return out.getvalue() if sink is None else ""


def read_metrics_csv(text) -> dict:
    text = text if isinstance(text, str) else text.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != METRICS_HEADER:
        raise DataFormatError(f"expected metrics header {','.join(METRICS_HEADER)}", 1)
    rows = {}
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(METRICS_HEADER):
            raise DataFormatError(f"expected {len(METRICS_HEADER)} columns", lineno)
        try:
            rows[(rec[0], rec[1])] = MetricsReport(float(rec[2]), float(rec[3]), float(rec[4]), float(rec[5]),
                                                   int(rec[6]), int(rec[7]))
        except ValueError:
            raise DataFormatError("non-numeric metric", lineno) from None
    return rows
