"""Per-dataset metrics for trained kill predictors and the report files built from them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateLabels, SchemaMismatch
from .match_data.records import DatasetSplit, MatchRecord
from .metrics import auc_kill_race, kill_race_labels, tie_rate
from .model import (
    CharacterIndex,
    FeatureSpec,
    MlpModel,
    TrainHistory,
    build_feature_matrix,
    predict_kills,
)

REPORT_DATASETS = ("test", "test732", "test733")
TABLE2_HEADER = ("model", "test_auc", "test732_auc", "test733_auc")
CURVES_HEADER = ("epoch", "train_loss", "val_loss", "train_auc", "val_auc")


@dataclass(frozen=True)
class DatasetMetrics:
    auc: float
    mse: float
    tie_count: int
    tie_fraction: float
    n_matches: int
    excluded_tied_actuals: int


@dataclass(frozen=True)
class EvalReport:
    variant: str
    datasets: dict[str, DatasetMetrics] = field(default_factory=dict)


@dataclass(frozen=True)
class TrainedModel:
    model: MlpModel
    spec: FeatureSpec
    history: TrainHistory | None = None


def evaluate_dataset(
    model: MlpModel, spec: FeatureSpec, records: Sequence[MatchRecord], context: CharacterIndex | None = None
) -> DatasetMetrics:
    """AUC on raw predictions; ties on rounded predictions; MSE in kills."""
    if not records:
        return DatasetMetrics(float("nan"), float("nan"), 0, float("nan"), 0, 0)
    X = build_feature_matrix(spec, records, context)
    pred = predict_kills(model, spec, X)
    actual = np.array([[r.kills_radiant, r.kills_dire] for r in records], dtype=float)
    try:
        auc = auc_kill_race(pred, actual)
    except DegenerateLabels:
        auc = float("nan")
    _, keep = kill_race_labels(actual)
    ties, frac = tie_rate(pred)
    return DatasetMetrics(
        auc=auc,
        mse=float(np.mean((pred - actual) ** 2)),
        tie_count=ties,
        tie_fraction=frac,
        n_matches=len(records),
        excluded_tied_actuals=int((~keep).sum()),
    )


def _fmt(x: float) -> str:
    return "nan" if isinstance(x, float) and math.isnan(x) else repr(float(x))


def write_curves_csv(history: TrainHistory, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVES_HEADER)
        for i in range(len(history)):
            writer.writerow(
                [i + 1, *(_fmt(x) for x in (history.train_loss[i], history.val_loss[i],
                                            history.train_auc[i], history.val_auc[i]))]
            )


def read_curves_csv(path: str | Path) -> TrainHistory:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CURVES_HEADER:
        raise SchemaMismatch(f"{path}: header must be {','.join(CURVES_HEADER)}")
    h = TrainHistory()
    for row in rows[1:]:
        h.train_loss.append(float(row[1]))
        h.val_loss.append(float(row[2]))
        h.train_auc.append(float(row[3]))
        h.val_auc.append(float(row[4]))
    return h


def write_table2_csv(reports: Mapping[str, EvalReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE2_HEADER)
        for name in sorted(reports):
            rep = reports[name]
            writer.writerow([name.upper(), *(_fmt(rep.datasets[d].auc) for d in REPORT_DATASETS)])


def write_ties_csv(reports: Mapping[str, EvalReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "dataset", "n_matches", "auc", "mse", "tie_count", "tie_fraction", "excluded_tied_actuals"])
        for name in sorted(reports):
            for d in REPORT_DATASETS:
                m = reports[name].datasets[d]
                writer.writerow([name.upper(), d, m.n_matches, _fmt(m.auc), _fmt(m.mse), m.tie_count,
                                 _fmt(m.tie_fraction), m.excluded_tied_actuals])


def build_report(
    models: Mapping[str, TrainedModel],
    split: DatasetSplit,
    context: CharacterIndex | None = None,
    out_dir: str | Path | None = None,
) -> dict[str, EvalReport]:
    """Evaluate each model on Test / 7.32 / 7.33 and optionally write the report files.

    Files: ``table2.csv``, ``ties.csv`` and one ``curves_<model>.csv`` per model with a history.
    """
    named = split.named()
    reports = {}
    for name, trained in models.items():
        datasets = {
            d: evaluate_dataset(trained.model, trained.spec, named[d], context) for d in REPORT_DATASETS
        }
        reports[name] = EvalReport(name, datasets)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_table2_csv(reports, out / "table2.csv")
        write_ties_csv(reports, out / "ties.csv")
        for name, trained in models.items():
            if trained.history is not None:
                write_curves_csv(trained.history, out / f"curves_{name}.csv")
    return reports
