from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchclust.errors import (
    ConflictingProperty,
    FileUnreadable,
    MalformedDocument,
    MissingHeroRecord,
    SchemaMismatch,
    UnknownHeroReference,
)
from patchclust.ingest import (
    PRIMARY_COLUMNS,
    AbilityRow,
    AliasMap,
    AliasRule,
    HeroAttributeRecord,
    PrimaryAttribute,
    RawAbility,
    RawAbilityTable,
    StandardizedAbilityTable,
    attach_hero_attributes,
    build_feature_table,
    canonical_order,
    load_alias_map,
    load_feature_table,
    normalize_properties,
    parse_patch_constants,
    persist_feature_table,
    property_magnitude,
    read_hero_map,
    write_hero_map,
)

CONSTANTS = Path(__file__).parent / "fixtures" / "constants"


def _write_constants(tmp_path: Path, hero_abilities, abilities, heroes) -> tuple[Path, Path, Path]:
    paths = []
    for name, doc in (("hero_abilities.json", hero_abilities), ("abilities.json", abilities), ("heroes.json", heroes)):
        p = tmp_path / name
        p.write_text(json.dumps(doc))
        paths.append(p)
    return tuple(paths)


def _hero(hid, name, attr="str", **stats):
    return {"id": hid, "name": name, "localized_name": name.title(), "primary_attr": attr, **stats}


# --- parsing -------------------------------------------------------------------


def test_neutral_ability_is_dropped(tmp_path):
    files = _write_constants(
        tmp_path,
        {"npc_dota_hero_a": {"abilities": ["a_one"]}, "npc_dota_hero_b": {"abilities": ["b_one", "b_two"]}},
        {
            "a_one": {"attrib": [{"key": "damage", "value": "100"}]},
            "b_one": {"attrib": [{"key": "radius", "value": "300"}]},
            "b_two": {"attrib": [{"key": "duration", "value": "2"}]},
            "centaur_khan_war_stomp": {"attrib": [{"key": "radius", "value": "250"}]},
        },
        {"1": _hero(1, "npc_dota_hero_a"), "2": _hero(2, "npc_dota_hero_b", "agi")},
    )
    raw, heroes = parse_patch_constants(*files, "7.31")
    assert {e.ability for e in raw.entries} == {"a_one", "b_one", "b_two"}
    assert {e.character for e in raw.entries} == {"npc_dota_hero_a", "npc_dota_hero_b"}
    assert [h.hero_id for h in heroes] == [1, 2]


def test_fixture_neutral_and_placeholder_absent():
    raw, _ = parse_patch_constants(
        CONSTANTS / "7.31" / "hero_abilities.json",
        CONSTANTS / "7.31" / "abilities.json",
        CONSTANTS / "7.31" / "heroes.json",
        "7.31",
    )
    names = {e.ability for e in raw.entries}
    assert "centaur_khan_war_stomp" not in names
    assert "kobold_taskmaster_speed_aura" not in names
    assert "generic_hidden" not in names
    assert len(raw.entries) == 24


def test_new_character_present_in_732():
    raw, heroes = parse_patch_constants(
        CONSTANTS / "7.32" / "hero_abilities.json",
        CONSTANTS / "7.32" / "abilities.json",
        CONSTANTS / "7.32" / "heroes.json",
        "7.32",
    )
    assert raw.patch == "7.32"
    muerta = [e for e in raw.entries if e.character == "npc_dota_hero_muerta"]
    assert len(muerta) == 4
    assert any(h.character_name == "npc_dota_hero_muerta" and h.hero_id == 138 for h in heroes)


def test_per_level_string_preserved(tmp_path):
    files = _write_constants(
        tmp_path,
        {"npc_dota_hero_a": {"abilities": ["a_one"]}},
        {"a_one": {"attrib": [{"key": "damage", "value": "30 40 50"}], "cd": ["10", "8"]}},
        {"1": _hero(1, "npc_dota_hero_a")},
    )
    raw, _ = parse_patch_constants(*files, "7.31")
    props = raw.entries[0].properties
    assert props["damage"] == "30 40 50"
    assert props["cd"] == ["10", "8"]


def test_unknown_extra_keys_tolerated(tmp_path):
    files = _write_constants(
        tmp_path,
        {"npc_dota_hero_a": {"abilities": ["a_one"], "facets": [{"x": 1}], "talents": []}},
        {"a_one": {"attrib": [{"key": "damage", "value": "1", "whatever": [1, 2]}], "shiny_new_key": {"nested": 1}}},
        {"1": _hero(1, "npc_dota_hero_a", roles=["Carry"], brand_new_field=3)},
    )
    raw, heroes = parse_patch_constants(*files, "7.31")
    assert len(raw.entries) == 1
    assert heroes[0].primary_attribute is PrimaryAttribute.STRENGTH


def test_unknown_hero_reference(tmp_path):
    files = _write_constants(
        tmp_path,
        {"npc_dota_hero_ghost": {"abilities": ["a_one"]}},
        {"a_one": {}},
        {"1": _hero(1, "npc_dota_hero_a")},
    )
    with pytest.raises(UnknownHeroReference):
        parse_patch_constants(*files, "7.31")


def test_malformed_json_reports_location(tmp_path):
    files = _write_constants(tmp_path, {}, {}, {})
    files[1].write_text('{"a_one": {"attrib": [}\n')
    with pytest.raises(MalformedDocument) as info:
        parse_patch_constants(*files, "7.31")
    assert "abilities.json" in str(info.value)
    assert "line 1" in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(FileUnreadable):
        parse_patch_constants(tmp_path / "nope.json", tmp_path / "x.json", tmp_path / "y.json", "7.31")


def test_universal_accepted_for_any_patch():
    assert PrimaryAttribute.parse("all") is PrimaryAttribute.UNIVERSAL
    assert PrimaryAttribute.parse("universal") is PrimaryAttribute.UNIVERSAL
    with pytest.raises(ValueError):
        PrimaryAttribute.parse("luck")


# --- normalization -------------------------------------------------------------


def _raw(*props, patch="7.31"):
    return RawAbilityTable(patch, tuple(RawAbility("h", f"ab{i}", p) for i, p in enumerate(props)))


def test_slow_and_negative_bonus_are_identical():
    aliases = load_alias_map()
    table = normalize_properties(_raw({"movement_speed_slow": 30}, {"movement_speed_bonus": -30}), aliases)
    assert table.columns == ("movement_speed_slow",)
    assert table.rows[0].values == table.rows[1].values == (30.0,)


def test_per_level_list_collapses_to_mean():
    table = normalize_properties(_raw({"damage": [30, 40, 50]}, {"damage": "30 40 50"}))
    assert table.rows[0].values == (40.0,)
    assert table.rows[1].values == (40.0,)


def test_no_recognized_properties_gives_zero_row():
    table = normalize_properties(_raw({"damage": 5}, {}))
    assert len(table.rows) == 2
    assert table.rows[1].values == (0.0,)


def test_non_numeric_is_presence_flag():
    assert property_magnitude("Magical") == 1.0
    assert property_magnitude(["Point Target", "Unit Target"]) == 1.0
    assert property_magnitude("12.5%") == 12.5
    assert property_magnitude(True) == 1.0


def test_conflicting_duplicates_sum_and_warn():
    aliases = load_alias_map()
    with pytest.warns(ConflictingProperty):
        table = normalize_properties(_raw({"movement_speed_slow": 10, "movement_slow": 20}), aliases)
    assert table.rows[0].values == (30.0,)


def test_agreeing_duplicates_do_not_warn():
    aliases = load_alias_map()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        table = normalize_properties(_raw({"movement_speed_slow": 10, "movement_speed_bonus": -10}), aliases)
    assert table.rows[0].values == (10.0,)


def test_alias_map_rejects_chains_and_bad_signs():
    with pytest.raises(ValueError):
        AliasMap((AliasRule("a", "b", 1), AliasRule("b", "c", 1)))
    with pytest.raises(ValueError):
        AliasMap((AliasRule("a", "b", 2),))
    with pytest.raises(ValueError):
        AliasMap((AliasRule("a", "b", 1), AliasRule("a", "c", 1)))


def test_bundled_alias_map_is_closed():
    aliases = load_alias_map()
    for rule in aliases.rules:
        assert aliases.resolve(rule.canonical) == (rule.canonical, 1)


_prop_names = st.sampled_from(
    ["damage", "radius", "movement_speed_slow", "movement_speed_bonus", "cd", "mc", "duration", "dmg_type", "bonus_armor"]
)
_prop_values = st.one_of(
    st.integers(-500, 500),
    st.floats(-1e3, 1e3, allow_nan=False),
    st.lists(st.integers(0, 300), min_size=1, max_size=4),
    st.sampled_from(["Magical", "Yes", "10 20 30", "1.5"]),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.dictionaries(_prop_names, _prop_values, max_size=5), min_size=1, max_size=6))
def test_normalize_is_idempotent(props):
    aliases = load_alias_map()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConflictingProperty)
        once = normalize_properties(_raw(*props), aliases)
        twice = normalize_properties(once, aliases)
    assert twice.columns == once.columns
    assert np.array_equal(twice.matrix(), once.matrix())
    assert np.all(np.isfinite(once.matrix()))
    assert once.columns == canonical_order(once.columns)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.dictionaries(_prop_names, _prop_values, max_size=5), min_size=1, max_size=6), st.randoms())
def test_column_order_independent_of_input_order(props, rnd):
    aliases = load_alias_map()
    shuffled = []
    for p in props:
        items = list(p.items())
        rnd.shuffle(items)
        shuffled.append(dict(items))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConflictingProperty)
        a = normalize_properties(_raw(*props), aliases)
        b = normalize_properties(_raw(*shuffled), aliases)
    assert a.columns == b.columns
    assert np.array_equal(a.matrix(), b.matrix())


# --- hero attributes -----------------------------------------------------------


def _heroes():
    return [
        HeroAttributeRecord("h", 1, PrimaryAttribute.STRENGTH, {"str_gain": 3.0, "base_armor": 1.0}),
        HeroAttributeRecord("g", 2, PrimaryAttribute.UNIVERSAL, {"str_gain": 2.0, "base_armor": 1.0}),
    ]


def test_hero_with_four_abilities_shares_suffix():
    table = normalize_properties(_raw({"damage": 1}, {"damage": 2}, {"radius": 3}, {}))
    out = attach_hero_attributes(table, _heroes())
    assert len(out.rows) == 4
    width = len(out.columns) - len(table.columns)
    suffixes = {row.values[-width:] for row in out.rows}
    assert len(suffixes) == 1


def test_universal_one_hot_suffix():
    table = StandardizedAbilityTable("7.33", ("damage",), (AbilityRow("g", "x", (1.0,)),))
    out = attach_hero_attributes(table, _heroes())
    assert out.columns[-4:] == PRIMARY_COLUMNS
    assert out.rows[0].values[-4:] == (0.0, 0.0, 0.0, 1.0)


def test_differing_strength_gain_differs():
    table = StandardizedAbilityTable("7.31", ("damage",), (AbilityRow("h", "x", (1.0,)), AbilityRow("g", "y", (1.0,))))
    out = attach_hero_attributes(table, _heroes())
    i = out.columns.index("hero.str_gain")
    assert out.rows[0].values[i] == 3.0 and out.rows[1].values[i] == 2.0


def test_missing_hero_record():
    table = StandardizedAbilityTable("7.31", ("damage",), (AbilityRow("nobody", "x", (1.0,)),))
    with pytest.raises(MissingHeroRecord):
        attach_hero_attributes(table, _heroes())


def test_fixture_733_universal_heroes():
    table, heroes = build_feature_table(CONSTANTS / "7.33", "7.33")
    universal = {h.character_name for h in heroes if h.primary_attribute is PrimaryAttribute.UNIVERSAL}
    assert universal == {"npc_dota_hero_furion", "npc_dota_hero_storm_spirit"}
    for row in table.rows:
        expected = (0.0, 0.0, 0.0, 1.0) if row.character in universal else None
        if expected:
            assert row.values[-4:] == expected
        else:
            assert row.values[-1] == 0.0 and sum(row.values[-4:]) == 1.0


# --- persistence ---------------------------------------------------------------


def _three_rows():
    return StandardizedAbilityTable(
        "7.31",
        ("damage", "radius", "hero.str_gain") + PRIMARY_COLUMNS,
        (
            AbilityRow("h", "a", (0.1, 250.0, 3.0, 1.0, 0.0, 0.0, 0.0)),
            AbilityRow("h", "b", (1 / 3, 0.0, 3.0, 1.0, 0.0, 0.0, 0.0)),
            AbilityRow("g", "c", (-7.25, 1e-17, 2.0, 0.0, 0.0, 0.0, 1.0)),
        ),
    )


def test_round_trip(tmp_path):
    table = _three_rows()
    persist_feature_table(table, tmp_path / "t.csv")
    assert load_feature_table(tmp_path / "t.csv") == table
    assert load_feature_table(tmp_path / "t.csv", expected_columns=table.columns) == table


def test_permuted_header_rejected(tmp_path):
    table = _three_rows()
    persist_feature_table(table, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    head = lines[0].split(",")
    head[3], head[4] = head[4], head[3]
    (tmp_path / "p.csv").write_text("\n".join([",".join(head)] + lines[1:]) + "\n")
    with pytest.raises(SchemaMismatch):
        load_feature_table(tmp_path / "p.csv")
    with pytest.raises(SchemaMismatch):
        load_feature_table(tmp_path / "p.csv", expected_columns=table.columns)


def test_extra_column_named(tmp_path):
    table = _three_rows()
    wider = StandardizedAbilityTable(
        table.patch,
        ("damage", "mystery_stat", "radius") + table.columns[2:],
        tuple(AbilityRow(r.character, r.ability, r.values[:1] + (5.0,) + r.values[1:]) for r in table.rows),
    )
    persist_feature_table(wider, tmp_path / "w.csv")
    with pytest.raises(SchemaMismatch, match="mystery_stat"):
        load_feature_table(tmp_path / "w.csv", expected_columns=table.columns)


def test_mixed_patches_rejected(tmp_path):
    persist_feature_table(_three_rows(), tmp_path / "t.csv")
    text = (tmp_path / "t.csv").read_text().splitlines()
    text[-1] = text[-1].replace("7.31", "7.32", 1)
    (tmp_path / "m.csv").write_text("\n".join(text) + "\n")
    with pytest.raises(SchemaMismatch):
        load_feature_table(tmp_path / "m.csv")


def test_hero_map_round_trip(tmp_path):
    _, heroes = build_feature_table(CONSTANTS / "7.32", "7.32")
    write_hero_map(heroes, tmp_path / "heroes.csv")
    mapping = read_hero_map(tmp_path / "heroes.csv")
    assert mapping["npc_dota_hero_muerta"] == 138
    assert mapping["npc_dota_hero_antimage"] == 1


def test_fixture_columns_canonical_and_stable_across_patches():
    t31, _ = build_feature_table(CONSTANTS / "7.31", "7.31")
    t33, _ = build_feature_table(CONSTANTS / "7.33", "7.33")
    assert t31.columns == canonical_order(t31.columns)
    assert set(t31.columns) <= set(t33.columns)
    assert np.all(np.isfinite(t33.matrix()))
