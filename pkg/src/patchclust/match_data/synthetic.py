"""Seeded synthetic match corpora with a known lineup -> kills signal.

Each character gets a random multiset of ability clusters; a team's kills are

    round(base + duration_effect * duration_z + signal_scale * <coefficients, lineup counts> + noise)

clamped at zero. A fraction of matches is played in a later patch where every
match fields at least one character that never appears in the regular patches,
and a further fraction in a patch after that, where a few existing characters
have had their ability mix reworked.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..encoding import CharacterVector
from ..errors import InvalidConfig
from .records import MatchRecord

TRAIN_PATCHES = ("7.27", "7.28", "7.29", "7.30", "7.31")
NEW_CHARACTER_PATCH = "7.32"
REWORK_PATCH = "7.33"
FIRST_MATCH_ID = 7_000_000_000


@dataclass(frozen=True)
class SyntheticConfig:
    n_matches: int = 5000
    k: int = 12
    n_characters: int = 40
    abilities_per_character: tuple[int, int] = (4, 6)
    coefficients: tuple[float, ...] | None = None
    duration_mean: float = 2400.0
    duration_std: float = 600.0
    duration_min: float = 900.0
    base_kills: float = 25.0
    duration_effect: float = 6.0
    signal_scale: float = 1.0
    noise_std: float = 3.0
    n_new_characters: int = 1
    new_character_fraction: float = 0.2
    rework_fraction: float = 0.1
    n_reworked: int = 4
    train_patches: tuple[str, ...] = TRAIN_PATCHES
    new_character_patch: str = NEW_CHARACTER_PATCH
    rework_patch: str = REWORK_PATCH
    seed: int = 0

    def validate(self) -> None:
        lo, hi = self.abilities_per_character
        checks = [
            (self.n_matches >= 1, "n_matches must be positive"),
            (self.k >= 1, "k must be positive"),
            (self.n_characters >= 10, "need at least 10 characters to fill a match"),
            (0 <= lo <= hi, "abilities_per_character must be an ordered non-negative range"),
            (self.coefficients is None or len(self.coefficients) == self.k, "coefficients must have length k"),
            (self.duration_std >= 0 and self.noise_std >= 0, "standard deviations must be non-negative"),
            (self.duration_min > 0, "duration_min must be positive"),
            (0.0 <= self.new_character_fraction <= 1.0, "new_character_fraction must lie in [0, 1]"),
            (0.0 <= self.rework_fraction <= 1.0, "rework_fraction must lie in [0, 1]"),
            (self.new_character_fraction + self.rework_fraction <= 1.0, "holdout fractions exceed 1"),
            (0 <= self.n_reworked <= self.n_characters, "n_reworked must lie in [0, n_characters]"),
            (self.n_new_characters >= 1 or self.new_character_fraction == 0, "new-character matches need new characters"),
            (len(self.train_patches) >= 1, "need at least one regular patch"),
            (self.new_character_patch not in self.train_patches, "new-character patch must differ from regular patches"),
            (self.rework_patch not in self.train_patches and self.rework_patch != self.new_character_patch,
             "rework patch must differ from the other patches"),
        ]
        for ok, message in checks:
            if not ok:
                raise InvalidConfig(message)


@dataclass(frozen=True)
class SyntheticCorpus:
    records: list[MatchRecord]
    truth: SyntheticConfig
    character_vectors: list[CharacterVector]
    hero_ids: dict[str, int] = field(default_factory=dict)

    @property
    def new_hero_ids(self) -> list[int]:
        return list(range(self.truth.n_characters + 1, self.truth.n_characters + self.truth.n_new_characters + 1))


def character_name(hero_id: int) -> str:
    return f"synthetic_hero_{hero_id:03d}"


def generate_synthetic(config: SyntheticConfig) -> SyntheticCorpus:
    config.validate()
    rng = np.random.default_rng(config.seed)
    k = config.k

    if config.coefficients is None:
        coef = rng.normal(0.0, 1.0, size=k)
        coef -= coef.mean()
        config = replace(config, coefficients=tuple(float(c) for c in coef))
    coef = np.asarray(config.coefficients, dtype=float)

    n_total = config.n_characters + config.n_new_characters
    lo, hi = config.abilities_per_character
    counts = np.zeros((n_total + 1, k), dtype=int)  # row = hero id, row 0 unused
    for hero_id in range(1, n_total + 1):
        n_abilities = int(rng.integers(lo, hi + 1))
        labels = rng.integers(0, k, size=n_abilities)
        counts[hero_id] = np.bincount(labels, minlength=k)

    reworked = rng.choice(np.arange(1, config.n_characters + 1), size=config.n_reworked, replace=False)
    counts_rework = counts.copy()
    for hero_id in reworked:
        n_abilities = int(rng.integers(lo, hi + 1))
        counts_rework[hero_id] = np.bincount(rng.integers(0, k, size=n_abilities), minlength=k)

    regular = np.arange(1, config.n_characters + 1)
    new = np.arange(config.n_characters + 1, n_total + 1)
    everyone = np.arange(1, n_total + 1)
    n_rework_matches = int(round(config.rework_fraction * config.n_matches))
    n_new_matches = int(round(config.new_character_fraction * config.n_matches))
    first_rework = config.n_matches - n_rework_matches
    first_new = first_rework - n_new_matches

    records = []
    for i in range(config.n_matches):
        table = counts
        if i >= first_rework:
            patch = config.rework_patch
            table = counts_rework
            heroes = [int(h) for h in rng.choice(everyone, size=10, replace=False)]
        elif i >= first_new:
            patch = config.new_character_patch
            newcomer = int(rng.choice(new))
            others = [int(h) for h in rng.choice(regular, size=9, replace=False)]
            slot = int(rng.integers(10))
            heroes = others[:slot] + [newcomer] + others[slot:]
        else:
            patch = config.train_patches[int(rng.integers(len(config.train_patches)))]
            heroes = [int(h) for h in rng.choice(regular, size=10, replace=False)]

        duration = max(config.duration_min, rng.normal(config.duration_mean, config.duration_std))
        duration = int(round(duration))
        dz = (duration - config.duration_mean) / config.duration_std if config.duration_std > 0 else 0.0
        kills = []
        for team in (heroes[:5], heroes[5:]):
            lineup = table[team].sum(0)
            mean = config.base_kills + config.duration_effect * dz + config.signal_scale * float(coef @ lineup)
            kills.append(max(0, int(np.floor(mean + rng.normal(0.0, config.noise_std) + 0.5))))
        kr, kd = kills
        radiant_win = kr > kd if kr != kd else bool(rng.integers(2))
        records.append(
            MatchRecord(FIRST_MATCH_ID + i, patch, duration, kr, kd, tuple(heroes), bool(radiant_win))
        )

    per_patch = [(p, counts) for p in config.train_patches] + [(config.new_character_patch, counts)]
    if n_rework_matches:
        per_patch.append((config.rework_patch, counts_rework))
    vectors = [
        CharacterVector(tuple(int(c) for c in table[hero_id]), character_name(hero_id), patch)
        for patch, table in per_patch
        for hero_id in range(1, n_total + 1)
    ]
    hero_ids = {character_name(h): h for h in range(1, n_total + 1)}
    return SyntheticCorpus(records, config, vectors, hero_ids)


def signal_scores(corpus: SyntheticCorpus, records: Sequence[MatchRecord]) -> np.ndarray:
    """Noise-free Radiant-minus-Dire lineup signal, the best achievable kill-race score."""
    coef = np.asarray(corpus.truth.coefficients)
    by_key = {}
    for v in corpus.character_vectors:
        by_key[(v.patch, corpus.hero_ids[v.character_name])] = np.array(v.counts)
    out = []
    for r in records:
        diff = sum(by_key[(r.patch, h)] for h in r.radiant) - sum(by_key[(r.patch, h)] for h in r.dire)
        out.append(float(coef @ diff))
    return np.array(out)
