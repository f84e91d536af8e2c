"""End-to-end run on a synthetic corpus: the scaled-down version of the three-network comparison."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .evaluation import EvalReport, TrainedModel, build_report
from .match_data.records import DatasetSplit, split_dataset
from .match_data.synthetic import SyntheticConfig, SyntheticCorpus, generate_synthetic
from .model import (
    TEST_PROFILE_FACTOR,
    CharacterIndex,
    TrainConfig,
    Variant,
    build_feature_matrix,
    fit_feature_spec,
    init_mlp,
    profile_widths,
    target_matrix,
    train,
)

EXPERIMENT_SEED = 7


@dataclass(frozen=True)
class ExperimentResult:
    corpus: SyntheticCorpus
    split: DatasetSplit
    index: CharacterIndex
    models: dict[str, TrainedModel]
    reports: dict[str, EvalReport]


def run_synthetic_experiment(
    config: SyntheticConfig | None = None,
    profile_factor: int = TEST_PROFILE_FACTOR,
    epochs: int = 100,
    seed: int = EXPERIMENT_SEED,
    variants: Sequence[str] = ("nn1", "nn2", "nn3"),
    out_dir: str | Path | None = None,
    progress: Callable[[str, int, object], None] | None = None,
) -> ExperimentResult:
    """Generate, split, train each variant, and evaluate on Test and the new-character patch.

    nn2's id space is pre-extended to the largest id in the corpus so the
    new-character patch can be encoded at all; that input bit is always 0
    during training.
    """
    if config is None:
        config = SyntheticConfig(seed=seed)
    corpus = generate_synthetic(config)
    split = split_dataset(corpus.records, seed=seed)
    index = CharacterIndex(corpus.character_vectors, corpus.hero_ids)
    hidden = profile_widths(profile_factor)
    all_ids_max = max(corpus.hero_ids.values())

    models: dict[str, TrainedModel] = {}
    for name in variants:
        variant = Variant(name)
        spec = fit_feature_spec(
            variant,
            split.train,
            max_id=all_ids_max if variant is Variant.NN2 else None,
            k=corpus.truth.k if variant is Variant.NN3 else None,
        )
        train_set = (build_feature_matrix(spec, split.train, index), target_matrix(spec, split.train))
        val_set = (build_feature_matrix(spec, split.validation, index), target_matrix(spec, split.validation))
        net = init_mlp(spec.input_dim, seed=seed, hidden=hidden)
        cb = None if progress is None else (lambda epoch, hist, _n=name: progress(_n, epoch, hist))
        trained, history = train(net, train_set, val_set, TrainConfig(epochs=epochs, seed=seed), progress=cb)
        models[name] = TrainedModel(trained, spec, history)

    reports = build_report(models, split, index, out_dir)
    return ExperimentResult(corpus, split, index, models, reports)
