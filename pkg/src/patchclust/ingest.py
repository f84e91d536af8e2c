"""Per-patch constants parsing and ability-property standardization.

Reads the three OpenDota constants documents for one patch
(``hero_abilities.json``, ``abilities.json``, ``heroes.json``), keeps only
abilities reachable from playable heroes, and turns their heterogeneous
property dumps into a fixed numeric table with one row per (hero, ability).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ConflictingProperty,
    FileUnreadable,
    MalformedDocument,
    MissingHeroRecord,
    SchemaMismatch,
    UnknownHeroReference,
)

logger = logging.getLogger(__name__)

HERO_PREFIX = "hero."
PRIMARY_PREFIX = "primary."
TABLE_KEY_COLUMNS = ("patch", "character", "ability")

# Ability-document keys that carry prose or art, never game-design magnitudes.
TEXT_KEYS = frozenset({"dname", "desc", "img", "lore", "notes", "note", "attrib", "hurl", "id"})
# Hero-document keys that are numeric but are identifiers, not attributes.
HERO_ID_KEYS = frozenset({"id", "hero_id"})
PLACEHOLDER_ABILITIES = frozenset({"generic_hidden"})


class PrimaryAttribute(Enum):
    STRENGTH = "str"
    AGILITY = "agi"
    INTELLIGENCE = "int"
    UNIVERSAL = "all"

    @classmethod
    def parse(cls, raw: str) -> "PrimaryAttribute":
        key = str(raw).strip().lower()
        aliases = {
            "str": cls.STRENGTH, "strength": cls.STRENGTH,
            "agi": cls.AGILITY, "agility": cls.AGILITY,
            "int": cls.INTELLIGENCE, "intelligence": cls.INTELLIGENCE,
            "all": cls.UNIVERSAL, "universal": cls.UNIVERSAL, "uni": cls.UNIVERSAL,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown primary attribute {raw!r}") from None


PRIMARY_COLUMNS = tuple(PRIMARY_PREFIX + attr.value for attr in PrimaryAttribute)


@dataclass(frozen=True)
class RawAbility:
    character: str
    ability: str
    properties: Mapping[str, Any]


@dataclass(frozen=True)
class RawAbilityTable:
    patch: str
    entries: tuple[RawAbility, ...]


@dataclass(frozen=True)
class HeroAttributeRecord:
    character_name: str
    hero_id: int
    primary_attribute: PrimaryAttribute
    stats: Mapping[str, float]
    localized_name: str = ""


@dataclass(frozen=True)
class AliasRule:
    source: str
    canonical: str
    sign: int

    @property
    def value_transform(self) -> str:
        return "identity" if self.sign == 1 else "negate"


@dataclass(frozen=True)
class AliasMap:
    rules: tuple[AliasRule, ...] = ()

    def __post_init__(self):
        sources: dict[str, AliasRule] = {}
        for rule in self.rules:
            if rule.sign not in (1, -1):
                raise ValueError(f"alias sign must be +1 or -1, got {rule.sign} for {rule.source!r}")
            if rule.source in sources:
                raise ValueError(f"duplicate alias source {rule.source!r}")
            sources[rule.source] = rule
        for rule in self.rules:
            target = sources.get(rule.canonical)
            if target is not None and not (target.canonical == target.source and target.sign == 1):
                raise ValueError(
                    f"alias map is not closed: canonical {rule.canonical!r} is itself remapped"
                )
            if rule.canonical.startswith((HERO_PREFIX, PRIMARY_PREFIX)):
                raise ValueError(f"canonical name {rule.canonical!r} collides with hero columns")
        object.__setattr__(self, "_lookup", sources)

    def resolve(self, name: str) -> tuple[str, int]:
        rule = self._lookup.get(name)
        if rule is None:
            return name, 1
        return rule.canonical, rule.sign


def load_alias_map(path: str | Path | None = None) -> AliasMap:
    """Read a ``source,canonical,sign`` CSV; ``None`` loads the bundled map."""
    if path is None:
        text = resources.files("patchclust").joinpath("data/aliases.csv").read_text("utf-8")
        origin = "patchclust/data/aliases.csv"
    else:
        text = _read_text(path)
        origin = str(path)
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["source", "canonical", "sign"]:
        raise MalformedDocument(origin, "header", "expected columns source,canonical,sign")
    rules = []
    for lineno, row in enumerate(reader, start=2):
        sign_text = row["sign"].strip().replace("−", "-")
        try:
            sign = int(sign_text)
        except ValueError:
            raise MalformedDocument(origin, f"line {lineno}", f"bad sign {row['sign']!r}") from None
        rules.append(AliasRule(row["source"].strip(), row["canonical"].strip(), sign))
    try:
        return AliasMap(tuple(rules))
    except ValueError as exc:
        raise MalformedDocument(origin, "rules", str(exc)) from None


@dataclass(frozen=True)
class AbilityRow:
    character: str
    ability: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class StandardizedAbilityTable:
    patch: str
    columns: tuple[str, ...]
    rows: tuple[AbilityRow, ...]

    def __post_init__(self):
        width = len(self.columns)
        for row in self.rows:
            if len(row.values) != width:
                raise SchemaMismatch(
                    f"row ({row.character}, {row.ability}) has {len(row.values)} values, expected {width}"
                )

    def matrix(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, len(self.columns)))
        return np.array([row.values for row in self.rows], dtype=float)

    @property
    def characters(self) -> list[str]:
        return sorted({row.character for row in self.rows})

    def to_raw(self) -> RawAbilityTable:
        entries = tuple(
            RawAbility(row.character, row.ability, dict(zip(self.columns, row.values)))
            for row in self.rows
        )
        return RawAbilityTable(self.patch, entries)


def _column_key(name: str) -> tuple:
    if name.startswith(PRIMARY_PREFIX):
        try:
            return (2, PRIMARY_COLUMNS.index(name), name)
        except ValueError:
            return (2, len(PRIMARY_COLUMNS), name)
    if name.startswith(HERO_PREFIX):
        return (1, 0, name)
    return (0, 0, name)


def canonical_order(names: Iterable[str]) -> tuple[str, ...]:
    """Ability properties (lexicographic), then hero stats (lexicographic), then the primary one-hot."""
    return tuple(sorted(set(names), key=_column_key))


# --- parsing -----------------------------------------------------------------


def _read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise FileUnreadable(f"cannot read {path}: {exc}") from exc


def _load_json(path: str | Path) -> Any:
    text = _read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(path, f"line {exc.lineno} column {exc.colno}", exc.msg) from None


def _expect_dict(doc: Any, path, location: str) -> dict:
    if not isinstance(doc, dict):
        raise MalformedDocument(path, location, f"expected an object, got {type(doc).__name__}")
    return doc


def _ability_properties(doc: Mapping[str, Any], path, location: str) -> dict[str, Any]:
    props: dict[str, Any] = {}
    for key, value in doc.items():
        if key in TEXT_KEYS or value is None:
            continue
        props[key] = value
    attrib = doc.get("attrib", [])
    if attrib is None:
        attrib = []
    if isinstance(attrib, dict):
        # some historical dumps key attributes by name
        attrib = [{"key": k, "value": v} for k, v in attrib.items()]
    if not isinstance(attrib, list):
        raise MalformedDocument(path, f"{location}/attrib", "expected a list")
    for i, item in enumerate(attrib):
        if not isinstance(item, dict) or "key" not in item:
            raise MalformedDocument(path, f"{location}/attrib/{i}", "attribute entry without 'key'")
        if item.get("value") is None:
            continue
        props[str(item["key"])] = item["value"]
    return props


def _hero_record(entry: Mapping[str, Any], path, location: str) -> HeroAttributeRecord:
    for key in ("id", "name", "primary_attr"):
        if key not in entry:
            raise MalformedDocument(path, location, f"hero entry missing {key!r}")
    try:
        primary = PrimaryAttribute.parse(entry["primary_attr"])
    except ValueError as exc:
        raise MalformedDocument(path, f"{location}/primary_attr", str(exc)) from None
    stats = {
        key: float(value)
        for key, value in entry.items()
        if key not in HERO_ID_KEYS
        and isinstance(value, (int, float))
        and not isinstance(value, bool)
        and math.isfinite(value)
    }
    return HeroAttributeRecord(
        character_name=str(entry["name"]),
        hero_id=int(entry["id"]),
        primary_attribute=primary,
        stats=stats,
        localized_name=str(entry.get("localized_name", "")),
    )


def parse_patch_constants(
    hero_abilities_path: str | Path,
    abilities_path: str | Path,
    heroes_path: str | Path,
    patch_label: str,
) -> tuple[RawAbilityTable, list[HeroAttributeRecord]]:
    """Parse one patch's constants into raw ability entries plus hero attribute records.

    Only abilities listed under a hero in ``hero_abilities.json`` survive;
    anything else in ``abilities.json`` (neutral creatures, items, summons)
    is dropped. Property values are kept exactly as found.
    """
    mapping = _expect_dict(_load_json(hero_abilities_path), hero_abilities_path, "/")
    abilities = _expect_dict(_load_json(abilities_path), abilities_path, "/")
    heroes_doc = _load_json(heroes_path)
    if isinstance(heroes_doc, list):
        hero_entries = {str(i): h for i, h in enumerate(heroes_doc)}
    else:
        hero_entries = _expect_dict(heroes_doc, heroes_path, "/")

    heroes: dict[str, HeroAttributeRecord] = {}
    for key, entry in hero_entries.items():
        record = _hero_record(_expect_dict(entry, heroes_path, f"/{key}"), heroes_path, f"/{key}")
        heroes[record.character_name] = record

    entries: list[RawAbility] = []
    for hero_name, spec in mapping.items():
        spec = _expect_dict(spec, hero_abilities_path, f"/{hero_name}")
        if hero_name not in heroes:
            raise UnknownHeroReference(
                f"{hero_abilities_path}: hero {hero_name!r} has abilities but no entry in {heroes_path}"
            )
        names = spec.get("abilities", [])
        if not isinstance(names, list):
            raise MalformedDocument(hero_abilities_path, f"/{hero_name}/abilities", "expected a list")
        seen: set[str] = set()
        for ability_name in names:
            if ability_name in PLACEHOLDER_ABILITIES or ability_name in seen:
                continue
            seen.add(ability_name)
            doc = abilities.get(ability_name)
            if doc is None:
                logger.warning("%s: ability %r of %s missing from %s", patch_label, ability_name, hero_name, abilities_path)
                continue
            doc = _expect_dict(doc, abilities_path, f"/{ability_name}")
            props = _ability_properties(doc, abilities_path, f"/{ability_name}")
            entries.append(RawAbility(hero_name, ability_name, props))

    referenced = {e.character for e in entries} | set(mapping)
    hero_list = [heroes[name] for name in sorted(referenced)]
    return RawAbilityTable(str(patch_label), tuple(entries)), hero_list


# --- normalization -------------------------------------------------------------


def _numeric_values(value: Any) -> list[float] | None:
    """Flatten a raw property into numbers, or ``None`` if it is not numeric."""
    if isinstance(value, bool):
        return [1.0 if value else 0.0]
    if isinstance(value, (int, float)):
        return [float(value)] if math.isfinite(value) else None
    if isinstance(value, str):
        tokens = value.replace("/", " ").replace("%", " ").replace(",", " ").split()
        if not tokens:
            return None
        out = []
        for tok in tokens:
            try:
                num = float(tok)
            except ValueError:
                return None
            if not math.isfinite(num):
                return None
            out.append(num)
        return out
    if isinstance(value, (list, tuple)):
        out = []
        for item in value:
            sub = _numeric_values(item)
            if sub is None:
                return None
            out.extend(sub)
        return out or None
    return None


def property_magnitude(value: Any) -> float:
    """Collapse a raw property to one number: mean of per-level values, or 1 for a non-numeric flag."""
    nums = _numeric_values(value)
    if nums is None:
        return 1.0
    return float(sum(nums) / len(nums))


def normalize_properties(
    raw: RawAbilityTable | StandardizedAbilityTable,
    aliases: AliasMap | None = None,
) -> StandardizedAbilityTable:
    if aliases is None:
        aliases = AliasMap()
    if isinstance(raw, StandardizedAbilityTable):
        raw = raw.to_raw()

    canonical_rows: list[tuple[str, str, dict[str, float]]] = []
    names: set[str] = set()
    for entry in raw.entries:
        collected: dict[str, list[tuple[str, float]]] = {}
        for prop, value in entry.properties.items():
            canonical, sign = aliases.resolve(prop)
            nums = _numeric_values(value)
            magnitude = 1.0 if nums is None else sign * (sum(nums) / len(nums))
            collected.setdefault(canonical, []).append((prop, magnitude))
        values: dict[str, float] = {}
        for canonical, sources in collected.items():
            distinct = {v for _, v in sources}
            if len(distinct) == 1:
                values[canonical] = sources[0][1]
                continue
            total = float(sum(v for _, v in sources))
            warnings.warn(
                f"{raw.patch} {entry.character}/{entry.ability}: "
                f"{', '.join(s for s, _ in sources)} all map to {canonical!r} with different values; summing to {total}",
                ConflictingProperty,
                stacklevel=2,
            )
            values[canonical] = total
        names.update(values)
        canonical_rows.append((entry.character, entry.ability, values))

    columns = canonical_order(names)
    rows = tuple(
        AbilityRow(character, ability, tuple(float(values.get(c, 0.0)) for c in columns))
        for character, ability, values in canonical_rows
    )
    return StandardizedAbilityTable(raw.patch, columns, rows)


def attach_hero_attributes(
    table: StandardizedAbilityTable, heroes: Sequence[HeroAttributeRecord]
) -> StandardizedAbilityTable:
    if any(c.startswith((HERO_PREFIX, PRIMARY_PREFIX)) for c in table.columns):
        raise SchemaMismatch("table already carries hero attribute columns")
    by_name = {h.character_name: h for h in heroes}
    missing = sorted({row.character for row in table.rows} - set(by_name))
    if missing:
        raise MissingHeroRecord(f"no hero attribute record for: {', '.join(missing)}")

    used = [by_name[c] for c in sorted({row.character for row in table.rows})]
    stat_names = sorted({name for hero in used for name in hero.stats})
    hero_columns = tuple(HERO_PREFIX + name for name in stat_names)

    suffixes: dict[str, tuple[float, ...]] = {}
    for hero in used:
        stats = tuple(float(hero.stats.get(name, 0.0)) for name in stat_names)
        onehot = tuple(1.0 if attr is hero.primary_attribute else 0.0 for attr in PrimaryAttribute)
        suffixes[hero.character_name] = stats + onehot

    rows = tuple(
        AbilityRow(row.character, row.ability, row.values + suffixes[row.character]) for row in table.rows
    )
    return StandardizedAbilityTable(table.patch, table.columns + hero_columns + PRIMARY_COLUMNS, rows)


def build_feature_table(
    constants_dir: str | Path, patch_label: str, aliases: AliasMap | None = None
) -> tuple[StandardizedAbilityTable, list[HeroAttributeRecord]]:
    """Parse, normalize and attach attributes for a directory holding the three constants files."""
    root = Path(constants_dir)
    raw, heroes = parse_patch_constants(
        root / "hero_abilities.json", root / "abilities.json", root / "heroes.json", patch_label
    )
    table = normalize_properties(raw, aliases if aliases is not None else load_alias_map())
    return attach_hero_attributes(table, heroes), heroes


# --- persistence ---------------------------------------------------------------


def persist_feature_table(table: StandardizedAbilityTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE_KEY_COLUMNS + table.columns)
        for row in table.rows:
            writer.writerow([table.patch, row.character, row.ability, *(repr(float(v)) for v in row.values)])


def load_feature_table(
    path: str | Path, expected_columns: Sequence[str] | None = None
) -> StandardizedAbilityTable:
    """Read a feature CSV, rejecting headers that are not in canonical order or not as expected."""
    text = _read_text(path)
    reader = csv.reader(text.splitlines())
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaMismatch(f"{path}: empty file") from None
    if tuple(header[:3]) != TABLE_KEY_COLUMNS:
        raise SchemaMismatch(f"{path}: header must start with {','.join(TABLE_KEY_COLUMNS)}")
    columns = tuple(header[3:])
    if len(set(columns)) != len(columns):
        dupes = sorted({c for c in columns if columns.count(c) > 1})
        raise SchemaMismatch(f"{path}: duplicate columns {dupes}")
    if expected_columns is not None:
        expected = tuple(expected_columns)
        extra = [c for c in columns if c not in expected]
        if extra:
            raise SchemaMismatch(f"{path}: unexpected columns {extra}")
        absent = [c for c in expected if c not in columns]
        if absent:
            raise SchemaMismatch(f"{path}: missing columns {absent}")
        if columns != expected:
            raise SchemaMismatch(f"{path}: columns are not in the expected order")
    elif columns != canonical_order(columns):
        raise SchemaMismatch(f"{path}: columns are not in canonical order")

    patch = None
    rows = []
    for lineno, record in enumerate(reader, start=2):
        if not record:
            continue
        if len(record) != len(header):
            raise SchemaMismatch(f"{path}: line {lineno} has {len(record)} fields, expected {len(header)}")
        if patch is None:
            patch = record[0]
        elif record[0] != patch:
            raise SchemaMismatch(f"{path}: line {lineno} mixes patch {record[0]!r} into {patch!r}")
        try:
            values = tuple(float(v) for v in record[3:])
        except ValueError as exc:
            raise SchemaMismatch(f"{path}: line {lineno}: {exc}") from None
        rows.append(AbilityRow(record[1], record[2], values))
    return StandardizedAbilityTable(patch or "", columns, tuple(rows))


def write_hero_map(heroes: Sequence[HeroAttributeRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["hero_id", "character", "primary_attribute"])
        for hero in sorted(heroes, key=lambda h: h.hero_id):
            writer.writerow([hero.hero_id, hero.character_name, hero.primary_attribute.value])


def read_hero_map(path: str | Path) -> dict[str, int]:
    """character name -> hero id"""
    text = _read_text(path)
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None or "hero_id" not in reader.fieldnames or "character" not in reader.fieldnames:
        raise SchemaMismatch(f"{path}: expected hero_id and character columns")
    out = {}
    for row in reader:
        out[row["character"]] = int(row["hero_id"])
    return out
