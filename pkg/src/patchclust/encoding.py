"""Fixed-width character and lineup vectors built from ability cluster labels.

Also holds the Character-ID multi-hot baseline, whose width is tied to the
largest ID seen and therefore breaks when a new hero ships.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .clustering import ClusterModel, align_matrix, assign
from .errors import (
    FileUnreadable,
    IdOutOfRange,
    LabelOutOfRange,
    MixedDimensions,
    SchemaMismatch,
    WrongTeamSize,
)
from .ingest import StandardizedAbilityTable

TEAM_SIZE = 5


class Team(Enum):
    RADIANT = "Radiant"
    DIRE = "Dire"


@dataclass(frozen=True)
class CharacterVector:
    counts: tuple[int, ...]
    character_name: str = ""
    patch: str = ""

    @property
    def k(self) -> int:
        return len(self.counts)

    def array(self) -> np.ndarray:
        return np.array(self.counts, dtype=float)


@dataclass(frozen=True)
class LineupVector:
    counts: tuple[int, ...]
    team: Team = Team.RADIANT

    def array(self) -> np.ndarray:
        return np.array(self.counts, dtype=float)


@dataclass(frozen=True)
class IdVector:
    bits: tuple[int, ...]
    max_id: int

    def array(self) -> np.ndarray:
        return np.array(self.bits, dtype=float)


def _check_label(label, k: int) -> int:
    if k < 1:
        raise ValueError("k must be positive")
    if isinstance(label, (bool, np.bool_)) or int(label) != label or not 0 <= label < k:
        raise LabelOutOfRange(f"cluster label {label!r} outside [0, {k})")
    return int(label)


def encode_ability(cluster_label: int, k: int) -> tuple[int, ...]:
    i = _check_label(cluster_label, k)
    return tuple(1 if j == i else 0 for j in range(k))


def encode_character(
    ability_labels: Iterable[int], k: int, character_name: str = "", patch: str = ""
) -> CharacterVector:
    counts = [0] * k
    for label in ability_labels:
        counts[_check_label(label, k)] += 1
    return CharacterVector(tuple(counts), character_name, patch)


def encode_lineup(
    members: Sequence[CharacterVector], team: Team = Team.RADIANT, team_size: int | None = TEAM_SIZE
) -> LineupVector:
    if team_size is not None and len(members) != team_size:
        raise WrongTeamSize(f"lineup has {len(members)} members, expected {team_size}")
    if not members:
        raise WrongTeamSize("lineup has no members")
    widths = {m.k for m in members}
    if len(widths) != 1:
        raise MixedDimensions(f"members have differing widths {sorted(widths)}")
    patches = {m.patch for m in members}
    if len(patches) != 1:
        raise MixedDimensions(f"members come from differing patches {sorted(patches)}")
    total = [sum(col) for col in zip(*(m.counts for m in members))]
    return LineupVector(tuple(total), team)


def encode_character_ids(ids: Iterable[int], max_id: int) -> IdVector:
    bits = [0] * (max_id + 1)
    for hero_id in ids:
        if not 0 <= hero_id <= max_id:
            raise IdOutOfRange(hero_id, max_id)
        if bits[hero_id]:
            raise ValueError(f"character id {hero_id} listed twice")
        bits[hero_id] = 1
    return IdVector(tuple(bits), max_id)


def encode_table(
    model: ClusterModel, table: StandardizedAbilityTable, unseen: str = "error"
) -> tuple[list[CharacterVector], np.ndarray, list[str]]:
    """Label every ability of ``table`` with the frozen centroids and roll them up per character.

    Returns the character vectors (sorted by name), the per-row ability
    labels, and the names of any columns dropped as unseen.
    """
    matrix, dropped = align_matrix(table, model.columns, unseen=unseen)
    labels = assign(model, matrix) if len(matrix) else np.zeros(0, dtype=int)
    per_character: dict[str, list[int]] = defaultdict(list)
    for row, label in zip(table.rows, labels):
        per_character[row.character].append(int(label))
    vectors = [
        encode_character(per_character[name], model.k, name, table.patch) for name in sorted(per_character)
    ]
    return vectors, labels, dropped


def write_character_csv(vectors: Sequence[CharacterVector], path: str | Path) -> None:
    widths = {v.k for v in vectors}
    if len(widths) > 1:
        raise MixedDimensions(f"cannot write vectors of widths {sorted(widths)} to one file")
    k = widths.pop() if widths else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["patch", "character", *(f"c{i}" for i in range(k))])
        for v in vectors:
            writer.writerow([v.patch, v.character_name, *v.counts])


def read_character_csv(path: str | Path) -> list[CharacterVector]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc
    rows = list(csv.reader(lines))
    if not rows or rows[0][:2] != ["patch", "character"]:
        raise SchemaMismatch(f"{path}: header must start with patch,character")
    k = len(rows[0]) - 2
    if rows[0][2:] != [f"c{i}" for i in range(k)]:
        raise SchemaMismatch(f"{path}: count columns must be c0..c{k - 1}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != k + 2:
            raise SchemaMismatch(f"{path}: line {lineno} has {len(row)} fields")
        out.append(CharacterVector(tuple(int(c) for c in row[2:]), row[1], row[0]))
    return out
