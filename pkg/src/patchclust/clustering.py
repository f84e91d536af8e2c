"""K-Means over standardized ability features, with frozen-centroid assignment.

The model carries its own z-scaling so that abilities from patches released
after fitting are mapped into the same space and labelled without refitting.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (
    DimensionMismatch,
    EmptyLabelSet,
    FileUnreadable,
    LabelOutOfRange,
    NonFiniteInput,
    SchemaMismatch,
    SingleCluster,
    TooFewRows,
)
from .ingest import StandardizedAbilityTable, canonical_order

DEFAULT_RESTARTS = 10
DEFAULT_ELBOW_RANGE = (40, 75)
DRIFT_THRESHOLD = 0.05
_ZERO_VARIANCE = 1e-12


@dataclass(frozen=True, eq=False)
class ClusterModel:
    k: int
    centroids: np.ndarray  # k x D, standardized space; excluded columns are 0
    column_means: np.ndarray
    column_stds: np.ndarray
    excluded: np.ndarray  # bool mask of zero-variance columns
    columns: tuple[str, ...]
    fit_patches: tuple[str, ...] = ()
    seed: int = 0
    restarts: int = DEFAULT_RESTARTS
    sse: float = float("nan")
    fit_labels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("centroids", "column_means", "column_stds", "excluded", "fit_labels"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, copy=True)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return len(self.column_means)

    def transform(self, matrix) -> np.ndarray:
        """Standardize ``matrix`` with the frozen scaling and keep the columns used for distance."""
        X = _as_matrix(matrix)
        if X.shape[1] != self.dim:
            raise DimensionMismatch(f"matrix has {X.shape[1]} columns, model expects {self.dim}")
        Z = (X - self.column_means) / self.column_stds
        return Z[:, ~self.excluded]

    @property
    def active_centroids(self) -> np.ndarray:
        return self.centroids[:, ~self.excluded]


@dataclass(frozen=True)
class LloydResult:
    centroids: np.ndarray
    labels: np.ndarray
    sse: float
    sse_history: tuple[float, ...]
    n_iter: int


@dataclass(frozen=True)
class KSelectionReport:
    sse_by_k: dict[int, float]
    silhouette_by_k: dict[int, float]
    elbow_range: tuple[int, int]
    chosen_k: int


@dataclass(frozen=True)
class DriftReport:
    reference_histogram: np.ndarray
    new_histogram: np.ndarray
    divergence: float
    flagged: bool
    threshold: float = DRIFT_THRESHOLD


def _as_matrix(matrix) -> np.ndarray:
    X = np.asarray(matrix, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("matrix contains NaN or infinite values")
    return X


def _sq_distances(Z: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (Z * Z).sum(1)[:, None] - 2.0 * Z @ C.T + (C * C).sum(1)[None, :]
    np.maximum(d, 0.0, out=d)
    return d


def _nearest(Z: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.argmin(_sq_distances(Z, C), axis=1)


def _sse(Z: np.ndarray, C: np.ndarray, labels: np.ndarray) -> float:
    diff = Z - C[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def kmeans_plus_plus(Z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(Z)
    centers = [int(rng.integers(n))]
    closest = ((Z - Z[centers[0]]) ** 2).sum(1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            raise TooFewRows(f"fewer than {k} distinct rows")
        idx = int(rng.choice(n, p=closest / total))
        centers.append(idx)
        closest = np.minimum(closest, ((Z - Z[idx]) ** 2).sum(1))
    return Z[centers].copy()


def lloyd(Z: np.ndarray, init: np.ndarray, max_iter: int = 300, tol: float = 1e-6) -> LloydResult:
    C = np.array(init, dtype=float, copy=True)
    k = len(C)
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        labels = _nearest(Z, C)
        history.append(_sse(Z, C, labels))
        counts = np.bincount(labels, minlength=k)
        new = np.zeros_like(C)
        np.add.at(new, labels, Z)
        filled = counts > 0
        new[filled] /= counts[filled, None]
        if not filled.all():
            # reseed empty clusters at the worst-served points
            dist = ((Z - C[labels]) ** 2).sum(1)
            for j in np.flatnonzero(~filled):
                far = int(np.argmax(dist))
                new[j] = Z[far]
                dist[far] = -1.0
        shift = float(np.sqrt(((new - C) ** 2).sum(1)).max())
        C = new
        if shift < tol:
            break
    labels = _nearest(Z, C)
    sse = _sse(Z, C, labels)
    history.append(sse)
    return LloydResult(C, labels, sse, tuple(history), n_iter)


def hartigan_refine(Z: np.ndarray, labels: np.ndarray, k: int, max_passes: int = 100) -> LloydResult:
    """Single-point transfers that lower SSE, until none is left.

    Moving x from cluster a to b changes SSE by
    |b|/(|b|+1) |x-c_b|^2 - |a|/(|a|-1) |x-c_a|^2, so a point can be worth
    moving even when it is already nearest its own centroid. Lloyd's fixed
    points can therefore be improved; every fixed point of this pass is also
    a Lloyd fixed point.
    """
    labels = np.array(labels, dtype=int, copy=True)
    counts = np.bincount(labels, minlength=k).astype(float)
    sums = np.zeros((k, Z.shape[1]))
    np.add.at(sums, labels, Z)
    history = []
    passes = 0
    for passes in range(1, max_passes + 1):
        moved = False
        for i in range(len(Z)):
            a = labels[i]
            if counts[a] <= 1:
                continue
            C = sums / counts[:, None]
            d = ((C - Z[i]) ** 2).sum(1)
            gain_remove = counts[a] / (counts[a] - 1.0) * d[a]
            cost_add = counts / (counts + 1.0) * d
            cost_add[a] = np.inf
            b = int(np.argmin(cost_add))
            if cost_add[b] < gain_remove * (1.0 - 1e-12):
                sums[a] -= Z[i]
                sums[b] += Z[i]
                counts[a] -= 1
                counts[b] += 1
                labels[i] = b
                moved = True
        C = sums / counts[:, None]
        history.append(_sse(Z, C, labels))
        if not moved:
            break
    C = sums / counts[:, None]
    return LloydResult(C, labels, _sse(Z, C, labels), tuple(history), passes)


def fit_kmeans(
    matrix,
    k: int,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    columns: Sequence[str] | None = None,
    fit_patches: Sequence[str] = (),
    max_iter: int = 300,
    tol: float = 1e-6,
) -> ClusterModel:
    """Best-of-``restarts`` k-means++ / Lloyd fit in per-column z-scored space."""
    X = _as_matrix(matrix)
    n, d = X.shape
    if k < 1:
        raise ValueError("k must be positive")
    if n < k:
        raise TooFewRows(f"{n} rows cannot form {k} clusters")
    if restarts < 1:
        raise ValueError("restarts must be positive")
    if columns is None:
        columns = tuple(f"f{i}" for i in range(d))
    elif len(columns) != d:
        raise DimensionMismatch(f"{len(columns)} column names for {d} columns")

    means = X.mean(axis=0)
    stds = X.std(axis=0)
    excluded = stds <= _ZERO_VARIANCE * np.maximum(1.0, np.abs(means))
    stds = np.where(excluded, 1.0, stds)
    Z = ((X - means) / stds)[:, ~excluded]
    if len(np.unique(Z, axis=0)) < k:
        raise TooFewRows(f"fewer than {k} distinct rows after scaling")

    rng = np.random.default_rng(seed)
    best: LloydResult | None = None
    for _ in range(restarts):
        result = lloyd(Z, kmeans_plus_plus(Z, k, rng), max_iter=max_iter, tol=tol)
        if len(np.unique(result.labels)) == k:
            refined = hartigan_refine(Z, result.labels, k)
            if refined.sse < result.sse:
                result = refined
        if best is None or result.sse < best.sse:
            best = result

    full = np.zeros((k, d))
    full[:, ~excluded] = best.centroids
    return ClusterModel(
        k=k,
        centroids=full,
        column_means=means,
        column_stds=stds,
        excluded=excluded,
        columns=tuple(columns),
        fit_patches=tuple(fit_patches),
        seed=seed,
        restarts=restarts,
        sse=best.sse,
        fit_labels=best.labels,
    )


def assign(model: ClusterModel, matrix) -> np.ndarray:
    Z = model.transform(matrix)
    return _nearest(Z, model.active_centroids)


def compute_sse(model: ClusterModel, matrix) -> float:
    Z = model.transform(matrix)
    C = model.active_centroids
    return _sse(Z, C, _nearest(Z, C))


def compute_silhouette(matrix, labels) -> float:
    X = _as_matrix(matrix)
    labels = np.asarray(labels)
    if len(labels) != len(X):
        raise DimensionMismatch(f"{len(labels)} labels for {len(X)} rows")
    uniq, inv = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        raise SingleCluster("silhouette needs at least two clusters")
    n, m = len(X), len(uniq)
    dist = cdist(X, X)
    onehot = np.zeros((n, m))
    onehot[np.arange(n), inv] = 1.0
    sums = dist @ onehot
    counts = onehot.sum(0)
    own = counts[inv]
    a = np.where(own > 1, sums[np.arange(n), inv] / np.maximum(own - 1, 1), 0.0)
    means = sums / counts
    means[np.arange(n), inv] = np.inf
    b = means.min(1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def select_k(
    matrix,
    k_min: int = DEFAULT_ELBOW_RANGE[0],
    k_max: int = DEFAULT_ELBOW_RANGE[1],
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    sse_ks: Sequence[int] | None = None,
    columns: Sequence[str] | None = None,
    progress=None,
) -> KSelectionReport:
    """SSE over the scan grid and silhouette inside ``[k_min, k_max]``; pick the best silhouette.

    ``sse_ks`` widens the SSE-only grid for drawing the elbow. Silhouette
    ties go to the smaller K.
    """
    X = _as_matrix(matrix)
    if not 1 <= k_min <= k_max:
        raise ValueError(f"invalid K range [{k_min}, {k_max}]")
    if k_max > len(X):
        raise TooFewRows(f"k_max={k_max} exceeds {len(X)} rows")
    window = range(k_min, k_max + 1)
    grid = sorted(set(window) | set(sse_ks or ()))
    sse_by_k: dict[int, float] = {}
    sil_by_k: dict[int, float] = {}
    for k in grid:
        model = fit_kmeans(X, k, seed=seed, restarts=restarts, columns=columns)
        sse_by_k[k] = model.sse
        if k in window and k >= 2:
            sil_by_k[k] = compute_silhouette(model.transform(X), model.fit_labels)
        if progress is not None:
            progress(k, sse_by_k[k], sil_by_k.get(k))
    if sil_by_k:
        chosen = max(sil_by_k, key=lambda k: (sil_by_k[k], -k))
    else:
        chosen = k_min
    return KSelectionReport(sse_by_k, sil_by_k, (k_min, k_max), chosen)


def drift_divergence(reference_labels, new_labels, k: int, threshold: float = DRIFT_THRESHOLD) -> DriftReport:
    """Jensen-Shannon divergence (nats) between add-one-smoothed cluster histograms."""
    ref = np.asarray(reference_labels, dtype=int).ravel()
    new = np.asarray(new_labels, dtype=int).ravel()
    if ref.size == 0 or new.size == 0:
        raise EmptyLabelSet("drift needs non-empty label sets on both sides")
    for labels in (ref, new):
        if labels.min() < 0 or labels.max() >= k:
            raise LabelOutOfRange(f"labels must lie in [0, {k})")
    p = (np.bincount(ref, minlength=k) + 1.0) / (ref.size + k)
    q = (np.bincount(new, minlength=k) + 1.0) / (new.size + k)
    m = 0.5 * (p + q)
    js = 0.5 * float(np.sum(p * np.log(p / m))) + 0.5 * float(np.sum(q * np.log(q / m)))
    js = min(max(js, 0.0), math.log(2.0))
    return DriftReport(p, q, js, js > threshold, threshold)


def classify_change(unseen_columns: Sequence[str], drift: DriftReport | None) -> str:
    """Breaking if the feature space changed shape, impactful if the cluster mix moved, else unimpactful."""
    if unseen_columns:
        return "breaking"
    if drift is not None and drift.flagged:
        return "impactful"
    return "unimpactful"


# --- tables <-> matrices -------------------------------------------------------


def stack_tables(tables: Sequence[StandardizedAbilityTable]) -> tuple[tuple[str, ...], np.ndarray]:
    """Union the columns of several patch tables (missing properties are 0) and stack their rows."""
    columns = canonical_order(c for t in tables for c in t.columns)
    blocks = [align_matrix(t, columns, unseen="error")[0] for t in tables]
    if not blocks:
        return columns, np.zeros((0, len(columns)))
    return columns, np.vstack(blocks)


def align_matrix(
    table: StandardizedAbilityTable, columns: Sequence[str], unseen: str = "error"
) -> tuple[np.ndarray, list[str]]:
    """Project ``table`` onto ``columns``.

    Columns the table lacks are zero-filled. Columns the target lacks are a
    dimension change: ``unseen="error"`` raises, ``unseen="drop"`` discards
    them and returns their names.
    """
    if unseen not in ("error", "drop"):
        raise ValueError("unseen must be 'error' or 'drop'")
    target = {c: i for i, c in enumerate(columns)}
    extra = [c for c in table.columns if c not in target]
    if extra and unseen == "error":
        raise DimensionMismatch(f"patch {table.patch}: columns unseen at fit time: {extra}")
    src = table.matrix()
    out = np.zeros((len(table.rows), len(columns)))
    for j, name in enumerate(table.columns):
        i = target.get(name)
        if i is not None:
            out[:, i] = src[:, j]
    return out, extra


# --- persistence ---------------------------------------------------------------


def save_cluster_model(model: ClusterModel, path: str | Path) -> None:
    """Centroid CSV at ``path`` plus a ``<path>.meta.json`` sidecar with the scaling."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(model.columns)
        for row in model.centroids:
            writer.writerow([repr(float(v)) for v in row])
    meta = {
        "k": model.k,
        "seed": model.seed,
        "restarts": model.restarts,
        "sse": model.sse,
        "fit_patches": list(model.fit_patches),
        "columns": list(model.columns),
        "column_means": [float(v) for v in model.column_means],
        "column_stds": [float(v) for v in model.column_stds],
        "excluded_columns": [c for c, e in zip(model.columns, model.excluded) if e],
    }
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")


def load_cluster_model(path: str | Path) -> ClusterModel:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
        meta = json.loads(Path(str(path) + ".meta.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FileUnreadable(f"cannot read cluster model {path}: {exc}") from exc
    rows = list(csv.reader(lines))
    header = tuple(rows[0])
    if header != tuple(meta["columns"]):
        raise SchemaMismatch(f"{path}: centroid header disagrees with metadata columns")
    centroids = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    if centroids.shape != (meta["k"], len(header)):
        raise SchemaMismatch(f"{path}: expected {meta['k']} centroids of width {len(header)}")
    excluded_names = set(meta["excluded_columns"])
    return ClusterModel(
        k=int(meta["k"]),
        centroids=centroids,
        column_means=np.array(meta["column_means"], dtype=float),
        column_stds=np.array(meta["column_stds"], dtype=float),
        excluded=np.array([c in excluded_names for c in header]),
        columns=header,
        fit_patches=tuple(meta["fit_patches"]),
        seed=int(meta["seed"]),
        restarts=int(meta["restarts"]),
        sse=float(meta["sse"]),
    )


def write_selection_csv(report: KSelectionReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "sse", "silhouette"])
        for k in sorted(report.sse_by_k):
            sil = report.silhouette_by_k.get(k)
            writer.writerow([k, repr(report.sse_by_k[k]), "" if sil is None else repr(sil)])
