"""Feature assembly for the three kill-predictor variants and a numpy MLP trained with Adam.

Variants differ only in how the ten heroes enter the input:

* ``nn1``: duration only.
* ``nn2``: duration plus a Character-ID multi-hot per team (width tied to the largest ID).
* ``nn3``: duration plus the per-team sum of cluster-count character vectors (width 2K).

The network is a plain sigmoid stack with an identity head producing Radiant
and Dire kills scaled by ``1 / target_scale``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .encoding import CharacterVector, Team, encode_character_ids, encode_lineup
from .errors import (
    DegenerateLabels,
    DimensionMismatch,
    EmptyDataset,
    FileUnreadable,
    IdOutOfRange,
    InvalidConfig,
    NonFiniteLoss,
    SchemaMismatch,
    UnknownCharacter,
)
from .match_data.records import MatchRecord
from .metrics import auc_kill_race, round_half_up

HIDDEN_WIDTHS = (1024, 512, 128, 64, 32, 8)
TEST_PROFILE_FACTOR = 8
N_OUTPUTS = 2
TARGET_SCALE = 100.0
MODEL_FORMAT = "patchclust-mlp/1"


class Variant(Enum):
    NN1 = "nn1"
    NN2 = "nn2"
    NN3 = "nn3"


def profile_widths(factor: int = 1) -> tuple[int, ...]:
    """Hidden widths divided by ``factor``, never narrower than the output layer.

    ``factor=8`` is the test profile: (128, 64, 16, 8, 4, 2). A one-unit last
    hidden layer would make both outputs affine in a single scalar, so the
    predicted kill difference could not vary independently of the total.
    """
    if factor < 1:
        raise ValueError("factor must be at least 1")
    return tuple(max(N_OUTPUTS, w // factor) for w in HIDDEN_WIDTHS)


# --- features -------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureSpec:
    variant: Variant
    duration_mean: float
    duration_std: float
    max_id: int | None = None
    k: int | None = None
    target_scale: float = TARGET_SCALE

    def __post_init__(self):
        if self.variant is Variant.NN2 and (self.max_id is None or self.max_id < 0):
            raise InvalidConfig("nn2 needs a non-negative max_id")
        if self.variant is Variant.NN3 and (self.k is None or self.k < 1):
            raise InvalidConfig("nn3 needs a positive cluster count k")
        if not self.duration_std > 0:
            raise InvalidConfig("duration_std must be positive")

    @property
    def input_dim(self) -> int:
        if self.variant is Variant.NN1:
            return 1
        if self.variant is Variant.NN2:
            return 1 + 2 * (self.max_id + 1)
        return 1 + 2 * self.k

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSpec":
        d = dict(d)
        d["variant"] = Variant(d["variant"])
        return cls(**d)


def fit_feature_spec(
    variant: Variant | str,
    train_records: Sequence[MatchRecord],
    max_id: int | None = None,
    k: int | None = None,
    target_scale: float = TARGET_SCALE,
) -> FeatureSpec:
    """Freeze duration scaling (and, for nn2, the id space) from the training matches."""
    variant = Variant(variant)
    if not train_records:
        raise EmptyDataset("cannot fit feature scaling on an empty training set")
    durations = np.array([r.duration for r in train_records], dtype=float)
    std = float(durations.std())
    if variant is Variant.NN2 and max_id is None:
        max_id = max(max(r.heroes) for r in train_records)
    return FeatureSpec(
        variant=variant,
        duration_mean=float(durations.mean()),
        duration_std=std if std > 0 else 1.0,
        max_id=max_id if variant is Variant.NN2 else None,
        k=k if variant is Variant.NN3 else None,
        target_scale=target_scale,
    )


class CharacterIndex:
    """Patch-aware lookup from hero id to its cluster-count character vector."""

    def __init__(self, vectors: Sequence[CharacterVector], hero_ids: Mapping[str, int]):
        self._table: dict[tuple[str, int], CharacterVector] = {}
        widths = set()
        for v in vectors:
            if v.character_name not in hero_ids:
                raise UnknownCharacter(f"no hero id for character {v.character_name!r}")
            self._table[(v.patch, int(hero_ids[v.character_name]))] = v
            widths.add(v.k)
        if len(widths) > 1:
            raise DimensionMismatch(f"character vectors of mixed widths {sorted(widths)}")
        self.k = widths.pop() if widths else 0

    def lookup(self, patch: str, hero_id: int) -> CharacterVector:
        try:
            return self._table[(patch, hero_id)]
        except KeyError:
            raise UnknownCharacter(f"no character vector for hero {hero_id} in patch {patch}") from None

    def patches(self) -> set[str]:
        return {p for p, _ in self._table}


def build_features(spec: FeatureSpec, match: MatchRecord, context: CharacterIndex | None = None) -> np.ndarray:
    duration_z = (match.duration - spec.duration_mean) / spec.duration_std
    if spec.variant is Variant.NN1:
        return np.array([duration_z])
    if spec.variant is Variant.NN2:
        radiant = encode_character_ids(match.radiant, spec.max_id)
        dire = encode_character_ids(match.dire, spec.max_id)
        return np.concatenate(([duration_z], radiant.array(), dire.array()))
    if context is None:
        raise UnknownCharacter("nn3 features need a character index")
    if context.k != spec.k:
        raise DimensionMismatch(f"character vectors have width {context.k}, spec expects {spec.k}")
    radiant = encode_lineup([context.lookup(match.patch, h) for h in match.radiant], Team.RADIANT)
    dire = encode_lineup([context.lookup(match.patch, h) for h in match.dire], Team.DIRE)
    return np.concatenate(([duration_z], radiant.array(), dire.array()))


def build_feature_matrix(
    spec: FeatureSpec, records: Sequence[MatchRecord], context: CharacterIndex | None = None
) -> np.ndarray:
    if not records:
        return np.zeros((0, spec.input_dim))
    return np.vstack([build_features(spec, r, context) for r in records])


def check_encodable(spec: FeatureSpec, records: Sequence[MatchRecord], context: CharacterIndex | None = None) -> None:
    """Raise the first encoding error any record would hit (e.g. IdOutOfRange for nn2)."""
    for r in records:
        if spec.variant is Variant.NN2:
            for h in r.heroes:
                if not 0 <= h <= spec.max_id:
                    raise IdOutOfRange(h, spec.max_id)
        elif spec.variant is Variant.NN3:
            if context is None:
                raise UnknownCharacter("nn3 features need a character index")
            for h in r.heroes:
                context.lookup(r.patch, h)


def target_matrix(spec: FeatureSpec, records: Sequence[MatchRecord]) -> np.ndarray:
    if not records:
        return np.zeros((0, N_OUTPUTS))
    return np.array([[r.kills_radiant, r.kills_dire] for r in records], dtype=float) / spec.target_scale


# --- network --------------------------------------------------------------------


def _layout(input_dim: int, hidden: Sequence[int]) -> list[tuple[int, int]]:
    widths = [input_dim, *hidden, N_OUTPUTS]
    return list(zip(widths[:-1], widths[1:]))


def n_parameters(input_dim: int, hidden: Sequence[int]) -> int:
    return sum(i * o + o for i, o in _layout(input_dim, hidden))


def _views(flat: np.ndarray, input_dim: int, hidden: Sequence[int]) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    pos = 0
    for fan_in, fan_out in _layout(input_dim, hidden):
        W = flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = flat[pos:pos + fan_out]
        pos += fan_out
        out.append((W, b))
    return out


@dataclass(eq=False)
class MlpModel:
    input_dim: int
    hidden: tuple[int, ...]
    params: np.ndarray  # flat, layer by layer: W (row-major, fan_in x fan_out) then b
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.params = np.ascontiguousarray(self.params, dtype=float)
        expected = n_parameters(self.input_dim, self.hidden)
        if self.params.shape != (expected,):
            raise DimensionMismatch(f"expected {expected} parameters, got {self.params.shape}")

    @property
    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return _views(self.params, self.input_dim, self.hidden)

    def copy(self) -> "MlpModel":
        return MlpModel(self.input_dim, self.hidden, self.params.copy(), self.seed)


def init_mlp(input_dim: int, seed: int = 0, hidden: Sequence[int] = HIDDEN_WIDTHS) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    if input_dim < 1:
        raise ValueError("input_dim must be at least 1")
    rng = np.random.default_rng(seed)
    params = np.zeros(n_parameters(input_dim, hidden))
    for W, _ in _views(params, input_dim, hidden):
        limit = math.sqrt(6.0 / (W.shape[0] + W.shape[1]))
        W[...] = rng.uniform(-limit, limit, size=W.shape)
    return MlpModel(input_dim, tuple(hidden), params, seed)


def forward(model: MlpModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    a = x.reshape(1, -1) if single else x
    if a.shape[1] != model.input_dim:
        raise DimensionMismatch(f"features have width {a.shape[1]}, model expects {model.input_dim}")
    layers = model.layers
    for W, b in layers[:-1]:
        a = expit(a @ W + b)
    W, b = layers[-1]
    out = a @ W + b
    return out[0] if single else out


def loss_and_grad(model: MlpModel, X, Y, grad: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Mean squared error over samples and both outputs, and its gradient w.r.t. the flat parameters."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if grad is None:
        grad = np.empty_like(model.params)
    layers = model.layers
    glayers = _views(grad, model.input_dim, model.hidden)
    acts = [X]
    a = X
    for W, b in layers[:-1]:
        a = expit(a @ W + b)
        acts.append(a)
    W, b = layers[-1]
    diff = a @ W + b - Y
    loss = float(np.mean(diff * diff))
    delta = diff * (2.0 / diff.size)
    for l in range(len(layers) - 1, -1, -1):
        gW, gb = glayers[l]
        np.matmul(acts[l].T, delta, out=gW)
        np.sum(delta, axis=0, out=gb)
        if l:
            s = acts[l]
            delta = (delta @ layers[l][0].T) * s * (1.0 - s)
    return loss, grad


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 1
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidConfig("epochs and batch_size must be positive")
        if not self.learning_rate > 0:
            raise InvalidConfig("learning_rate must be positive")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    train_auc: list[float] = field(default_factory=list)
    val_auc: list[float] = field(default_factory=list)

    def __len__(self):
        return len(self.train_loss)


def _mse(model: MlpModel, X, Y) -> float:
    if len(X) == 0:
        return float("nan")
    d = forward(model, X) - Y
    return float(np.mean(d * d))


def _auc_or_nan(model: MlpModel, X, Y) -> float:
    if len(X) == 0:
        return float("nan")
    try:
        return auc_kill_race(forward(model, X), Y)
    except DegenerateLabels:
        return float("nan")


def shuffle_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(n)


def train(
    model: MlpModel,
    train_set: tuple[np.ndarray, np.ndarray],
    validation_set: tuple[np.ndarray, np.ndarray],
    config: TrainConfig = TrainConfig(),
    progress: Callable[[int, TrainHistory], None] | None = None,
) -> tuple[MlpModel, TrainHistory]:
    """Adam with bias correction, one shuffled pass per epoch, no early stopping or regularization.

    Returns a new model; the input model is left untouched. AUC entries are
    NaN only when a set has no non-tied matches of both outcomes.
    """
    X, Y = (np.asarray(a, dtype=float) for a in train_set)
    Xv, Yv = (np.asarray(a, dtype=float) for a in validation_set)
    if len(X) == 0:
        raise EmptyDataset("training set is empty")
    if X.shape[1] != model.input_dim or Y.shape[1:] != (N_OUTPUTS,):
        raise DimensionMismatch("training arrays do not match the model")
    if len(Xv) and Xv.shape[1] != model.input_dim:
        raise DimensionMismatch("validation features do not match the model")

    model = model.copy()
    p = model.params
    g = np.zeros_like(p)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    scratch = np.empty_like(p)
    b1, b2, eps, lr = config.beta1, config.beta2, config.epsilon, config.learning_rate
    bs = config.batch_size
    history = TrainHistory()
    t = 0
    n = len(X)
    for epoch in range(config.epochs):
        order = shuffle_order(config.seed, epoch, n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            loss, _ = loss_and_grad(model, X[idx], Y[idx], g)
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} at epoch {epoch}, step {t + 1}")
            t += 1
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            np.multiply(g, g, out=scratch)
            scratch *= 1.0 - b2
            v += scratch
            # p -= lr * m_hat / (sqrt(v_hat) + eps)
            np.divide(v, 1.0 - b2 ** t, out=scratch)
            np.sqrt(scratch, out=scratch)
            scratch += eps
            np.divide(m, scratch, out=scratch)
            scratch *= lr / (1.0 - b1 ** t)
            p -= scratch
        history.train_loss.append(_mse(model, X, Y))
        history.val_loss.append(_mse(model, Xv, Yv))
        history.train_auc.append(_auc_or_nan(model, X, Y))
        history.val_auc.append(_auc_or_nan(model, Xv, Yv))
        if not (math.isfinite(history.train_loss[-1]) and (len(Xv) == 0 or math.isfinite(history.val_loss[-1]))):
            raise NonFiniteLoss(f"non-finite epoch loss after epoch {epoch}")
        if progress is not None:
            progress(epoch, history)
    return model, history


def predict_kills(model: MlpModel, spec: FeatureSpec, features) -> np.ndarray:
    """Unscaled kill predictions clamped at zero; no rounding."""
    out = np.asarray(forward(model, features)) * spec.target_scale
    return np.maximum(out, 0.0)


def predict_rounded(model: MlpModel, spec: FeatureSpec, features) -> np.ndarray:
    return round_half_up(predict_kills(model, spec, features))


# --- serialization --------------------------------------------------------------


def save_mlp(
    path: str | Path,
    model: MlpModel,
    spec: FeatureSpec,
    config: TrainConfig | None = None,
    extra: Mapping | None = None,
) -> None:
    """One JSON header line, then each weight matrix and bias vector as rows of floats."""
    header = {
        "format": MODEL_FORMAT,
        "variant": spec.variant.value,
        "input_dim": model.input_dim,
        "hidden": list(model.hidden),
        "seed": model.seed,
        "feature_spec": spec.to_dict(),
        "train_config": asdict(config) if config is not None else None,
        "extra": dict(extra or {}),
    }
    if spec.input_dim != model.input_dim:
        raise DimensionMismatch("feature spec and model disagree on input width")
    lines = [json.dumps(header, sort_keys=True)]
    for i, (W, b) in enumerate(model.layers):
        lines.append(f"W {i} {W.shape[0]} {W.shape[1]}")
        lines.extend(" ".join(repr(float(x)) for x in row) for row in W)
        lines.append(f"b {i} {b.shape[0]}")
        lines.append(" ".join(repr(float(x)) for x in b))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_mlp(path: str | Path) -> tuple[MlpModel, FeatureSpec, dict]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc
    try:
        header = json.loads(lines[0])
    except (IndexError, json.JSONDecodeError):
        raise SchemaMismatch(f"{path}: missing JSON header line") from None
    if header.get("format") != MODEL_FORMAT:
        raise SchemaMismatch(f"{path}: unsupported format {header.get('format')!r}")
    input_dim, hidden = int(header["input_dim"]), tuple(header["hidden"])
    params = np.zeros(n_parameters(input_dim, hidden))
    pos = 1
    for i, (W, b) in enumerate(_views(params, input_dim, hidden)):
        if lines[pos].split() != ["W", str(i), str(W.shape[0]), str(W.shape[1])]:
            raise SchemaMismatch(f"{path}: expected weight block {i} at line {pos + 1}")
        W[...] = np.array([[float(x) for x in lines[pos + 1 + r].split()] for r in range(W.shape[0])])
        pos += 1 + W.shape[0]
        if lines[pos].split() != ["b", str(i), str(b.shape[0])]:
            raise SchemaMismatch(f"{path}: expected bias block {i} at line {pos + 1}")
        b[...] = [float(x) for x in lines[pos + 1].split()]
        pos += 2
    model = MlpModel(input_dim, hidden, params, int(header["seed"]))
    spec = FeatureSpec.from_dict(header["feature_spec"])
    return model, spec, header
