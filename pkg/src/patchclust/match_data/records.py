"""Match records, their CSV form, validity filtering and the train/val/test/holdout split."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import EmptyDataset, FileUnreadable, SchemaMismatch

HOLDOUT_PATCHES = ("7.32", "7.33")
SPLIT_FRACTIONS = (0.64, 0.16, 0.20)
MATCH_CSV_HEADER = (
    "MatchID", "Patch", "Duration", "KillsR", "KillsD",
    *(f"Hero{i}" for i in range(10)),
    "RadiantWin",
)


@dataclass(frozen=True)
class MatchRecord:
    match_id: int
    patch: str
    duration: int
    kills_radiant: int
    kills_dire: int
    heroes: tuple[int, ...]
    radiant_win: bool

    @property
    def radiant(self) -> tuple[int, ...]:
        return self.heroes[:5]

    @property
    def dire(self) -> tuple[int, ...]:
        return self.heroes[5:]

    def problems(self) -> list[str]:
        out = []
        if self.duration <= 0:
            out.append("non-positive duration")
        if self.kills_radiant < 0 or self.kills_dire < 0:
            out.append("negative kills")
        if len(self.heroes) != 10:
            out.append(f"{len(self.heroes)} hero slots")
        elif len(set(self.heroes)) != 10:
            out.append("duplicate hero ids")
        if any(h < 0 for h in self.heroes):
            out.append("negative hero id")
        if not isinstance(self.radiant_win, (bool, np.bool_)):
            out.append("radiant_win is not boolean")
        return out


@dataclass(frozen=True)
class DatasetSplit:
    train: list[MatchRecord]
    validation: list[MatchRecord]
    test: list[MatchRecord]
    holdout_732: list[MatchRecord]
    holdout_733: list[MatchRecord]
    seed: int = 0

    def named(self) -> dict[str, list[MatchRecord]]:
        return {
            "train": self.train,
            "validation": self.validation,
            "test": self.test,
            "test732": self.holdout_732,
            "test733": self.holdout_733,
        }


def filter_valid(records: Iterable[MatchRecord]) -> list[MatchRecord]:
    return [r for r in records if not r.problems()]


def split_dataset(
    records: Sequence[MatchRecord], seed: int = 0, holdout_patches: Sequence[str] = HOLDOUT_PATCHES
) -> DatasetSplit:
    """Route holdout patches aside, shuffle the rest by ``seed`` and cut 64/16/20.

    Records are ordered by match id before shuffling, so membership does not
    depend on input order.
    """
    if not records:
        raise EmptyDataset("no match records to split")
    h732, h733 = holdout_patches
    pool = sorted((r for r in records if r.patch not in (h732, h733)), key=lambda r: r.match_id)
    n = len(pool)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(SPLIT_FRACTIONS[0] * n))
    n_val = int(round(SPLIT_FRACTIONS[1] * n))
    shuffled = [pool[i] for i in order]
    return DatasetSplit(
        train=shuffled[:n_train],
        validation=shuffled[n_train:n_train + n_val],
        test=shuffled[n_train + n_val:],
        holdout_732=sorted((r for r in records if r.patch == h732), key=lambda r: r.match_id),
        holdout_733=sorted((r for r in records if r.patch == h733), key=lambda r: r.match_id),
        seed=seed,
    )


def write_matches_csv(records: Iterable[MatchRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MATCH_CSV_HEADER)
        for r in records:
            writer.writerow(
                [r.match_id, r.patch, r.duration, r.kills_radiant, r.kills_dire, *r.heroes, int(r.radiant_win)]
            )


def read_matches_csv(path: str | Path) -> list[MatchRecord]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(text.splitlines())
    header = tuple(next(reader, ()))
    if header != MATCH_CSV_HEADER:
        raise SchemaMismatch(f"{path}: header must be {','.join(MATCH_CSV_HEADER)}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(MATCH_CSV_HEADER):
            raise SchemaMismatch(f"{path}: line {lineno} has {len(row)} fields")
        try:
            win = row[15].strip().lower()
            if win not in ("0", "1", "true", "false"):
                raise ValueError(f"RadiantWin must be 0/1, got {row[15]!r}")
            out.append(
                MatchRecord(
                    match_id=int(row[0]),
                    patch=row[1].strip(),
                    duration=int(row[2]),
                    kills_radiant=int(row[3]),
                    kills_dire=int(row[4]),
                    heroes=tuple(int(h) for h in row[5:15]),
                    radiant_win=win in ("1", "true"),
                )
            )
        except ValueError as exc:
            raise SchemaMismatch(f"{path}: line {lineno}: {exc}") from None
    return out
