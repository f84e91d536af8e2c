"""Command-line entry point: ``patchclust <subcommand> [flags]``.

Every run writes its outputs under ``--out`` with fixed file names plus a
``manifest.json`` recording flags, seeds and SHA-256 digests of inputs and
outputs. Exit codes: 0 success, 2 usage, 3 data error, 4 network error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

from . import __version__
from .clustering import (
    DEFAULT_ELBOW_RANGE,
    DEFAULT_RESTARTS,
    DRIFT_THRESHOLD,
    align_matrix,
    assign,
    classify_change,
    drift_divergence,
    fit_kmeans,
    load_cluster_model,
    save_cluster_model,
    select_k,
    stack_tables,
    write_selection_csv,
)
from .encoding import (
    Team,
    encode_lineup,
    encode_table,
    read_character_csv,
    write_character_csv,
)
from .errors import DataError, NetworkError, PatchClustError
from .evaluation import TrainedModel, build_report, read_curves_csv, write_curves_csv
from .ingest import (
    build_feature_table,
    load_alias_map,
    load_feature_table,
    persist_feature_table,
    read_hero_map,
    write_hero_map,
)
from .match_data.opendota import DEFAULT_BASE_URL, PAGE_SIZE, ExplorerClient, fetch_matches
from .match_data.records import read_matches_csv, split_dataset, write_matches_csv
from .match_data.synthetic import SyntheticConfig, generate_synthetic
from .model import (
    TEST_PROFILE_FACTOR,
    CharacterIndex,
    TrainConfig,
    Variant,
    build_feature_matrix,
    check_encodable,
    fit_feature_spec,
    init_mlp,
    load_mlp,
    profile_widths,
    save_mlp,
    target_matrix,
    train,
)

logger = logging.getLogger("patchclust")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NETWORK = 0, 2, 3, 4
DEFAULT_SEED = 0


class UsageError(PatchClustError):
    pass


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, args: argparse.Namespace, inputs: Sequence[Path], outputs: Sequence[Path]):
    flags = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in ("func", "command")}
    manifest = {
        "subcommand": command,
        "flags": flags,
        "seeds": {k: v for k, v in flags.items() if "seed" in k},
        "inputs": {str(p): _digest(Path(p)) for p in inputs if Path(p).is_file()},
        "outputs": {Path(p).name: _digest(Path(p)) for p in outputs},
        "tool_version": __version__,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _hero_ids(paths: Sequence[Path]) -> dict[str, int]:
    ids: dict[str, int] = {}
    for p in paths:
        ids.update(read_hero_map(p))
    return ids


def _character_index(character_files, hero_files) -> CharacterIndex:
    vectors = [v for p in character_files for v in read_character_csv(p)]
    return CharacterIndex(vectors, _hero_ids(hero_files))


# --- subcommands -----------------------------------------------------------------


def cmd_ingest(args, out: Path):
    aliases = load_alias_map(args.aliases)
    root = Path(args.constants)
    outputs = []
    inputs = [args.aliases] if args.aliases else []
    for patch in args.patches:
        src = root / patch if (root / patch).is_dir() else root
        if src == root and len(args.patches) > 1:
            raise UsageError(f"{root} has no subdirectory for patch {patch}")
        table, heroes = build_feature_table(src, patch, aliases)
        inputs += [src / "hero_abilities.json", src / "abilities.json", src / "heroes.json"]
        features = out / f"features_{patch}.csv"
        hero_map = out / f"heroes_{patch}.csv"
        persist_feature_table(table, features)
        write_hero_map(heroes, hero_map)
        outputs += [features, hero_map]
        logger.info("patch %s: %d abilities, %d columns", patch, len(table.rows), len(table.columns))
    return inputs, outputs


def cmd_cluster(args, out: Path):
    tables = [load_feature_table(p) for p in args.features]
    columns, matrix = stack_tables(tables)
    patches = sorted({t.patch for t in tables})
    outputs = []
    if args.k is not None:
        k = args.k
    else:
        sse_ks = None
        if args.sse_min is not None or args.sse_max is not None:
            lo = args.sse_min if args.sse_min is not None else args.k_min
            hi = args.sse_max if args.sse_max is not None else args.k_max
            sse_ks = range(lo, hi + 1)
        report = select_k(
            matrix, args.k_min, args.k_max, seed=args.seed, restarts=args.restarts, sse_ks=sse_ks,
            progress=lambda k, sse, sil: logger.info("K=%d sse=%.4f silhouette=%s", k, sse, sil),
        )
        write_selection_csv(report, out / "k_selection.csv")
        outputs.append(out / "k_selection.csv")
        k = report.chosen_k
        print(f"chosen K = {k}")
    model = fit_kmeans(matrix, k, seed=args.seed, restarts=args.restarts, columns=columns, fit_patches=patches)
    save_cluster_model(model, out / "clusters.model")
    outputs += [out / "clusters.model", out / "clusters.model.meta.json"]
    return list(args.features), outputs


def _feature_paths(args) -> list[Path]:
    paths = [Path(p) for p in (args.features or [])]
    if args.features_dir:
        if not args.patches:
            raise UsageError("--features-dir needs --patches")
        paths += [Path(args.features_dir) / f"features_{p}.csv" for p in args.patches]
    if not paths:
        raise UsageError("give --features or --features-dir with --patches")
    return paths


def cmd_encode(args, out: Path):
    model = load_cluster_model(args.model)
    paths = _feature_paths(args)
    outputs = []
    all_vectors = []
    for path in paths:
        table = load_feature_table(path)
        vectors, labels, dropped = encode_table(model, table, unseen=args.unseen)
        if dropped:
            print(f"patch {table.patch}: dropped columns unseen at fit time: {', '.join(dropped)}", file=sys.stderr)
        chars = out / f"characters_{table.patch}.csv"
        write_character_csv(vectors, chars)
        labels_path = out / f"ability_labels_{table.patch}.csv"
        with open(labels_path, "w", encoding="utf-8") as fh:
            fh.write("patch,character,ability,cluster\n")
            for row, label in zip(table.rows, labels):
                fh.write(f"{table.patch},{row.character},{row.ability},{int(label)}\n")
        outputs += [chars, labels_path]
        all_vectors += vectors
    inputs = [Path(args.model), *paths]
    if args.matches:
        if not args.heroes:
            raise UsageError("--matches needs --heroes to map hero ids to characters")
        index = CharacterIndex(all_vectors, _hero_ids(args.heroes))
        lineups = out / "lineups.csv"
        with open(lineups, "w", encoding="utf-8") as fh:
            fh.write("MatchID,Patch,Team," + ",".join(f"c{i}" for i in range(model.k)) + "\n")
            for r in read_matches_csv(args.matches):
                for team, ids in ((Team.RADIANT, r.radiant), (Team.DIRE, r.dire)):
                    vec = encode_lineup([index.lookup(r.patch, h) for h in ids], team)
                    fh.write(f"{r.match_id},{r.patch},{team.value}," + ",".join(map(str, vec.counts)) + "\n")
        outputs.append(lineups)
        inputs += [Path(args.matches), *map(Path, args.heroes)]
    return inputs, outputs


def cmd_fetch(args, out: Path):
    client = ExplorerClient(base_url=args.base_url, api_key=args.api_key, rate_limit=args.rate_limit)
    records = fetch_matches(args.patches, client, page_size=args.page_size, max_pages=args.max_pages)
    path = out / "matches.csv"
    write_matches_csv(records, path)
    print(f"{len(records)} matches written to {path}")
    return [], [path]


def cmd_synth(args, out: Path):
    config = SyntheticConfig(
        n_matches=args.n_matches,
        k=args.k,
        n_characters=args.n_characters,
        noise_std=args.noise_std,
        new_character_fraction=args.new_character_fraction,
        rework_fraction=args.rework_fraction,
        seed=args.seed,
    )
    corpus = generate_synthetic(config)
    paths = [out / "matches.csv", out / "characters.csv", out / "heroes.csv", out / "truth.json"]
    write_matches_csv(corpus.records, paths[0])
    write_character_csv(corpus.character_vectors, paths[1])
    with open(paths[2], "w", encoding="utf-8") as fh:
        fh.write("hero_id,character,primary_attribute\n")
        for name, hero_id in sorted(corpus.hero_ids.items(), key=lambda kv: kv[1]):
            fh.write(f"{hero_id},{name},\n")
    paths[3].write_text(json.dumps(asdict(corpus.truth), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return [], paths


def cmd_train(args, out: Path):
    variant = Variant(args.variant)
    records = read_matches_csv(args.matches)
    index = None
    inputs = [Path(args.matches)]
    k = None
    if variant is Variant.NN3:
        if not args.characters or not args.heroes:
            raise UsageError("nn3 needs --characters and --heroes")
        index = _character_index(args.characters, args.heroes)
        k = index.k
        inputs += [*map(Path, args.characters), *map(Path, args.heroes)]
    if args.max_id is not None and variant is Variant.NN2:
        # the id space is fixed up front; any record outside it is a breaking change
        probe = fit_feature_spec(variant, records, max_id=args.max_id)
        check_encodable(probe, records)
    split = split_dataset(records, seed=args.seed)
    spec = fit_feature_spec(variant, split.train, max_id=args.max_id, k=k)
    for rs in split.named().values():
        check_encodable(spec, rs, index)
    hidden = profile_widths(TEST_PROFILE_FACTOR if args.profile == "test" else 1)
    net = init_mlp(spec.input_dim, seed=args.seed, hidden=hidden)
    config = TrainConfig(epochs=args.epochs, learning_rate=args.lr, seed=args.seed)
    train_set = (build_feature_matrix(spec, split.train, index), target_matrix(spec, split.train))
    val_set = (build_feature_matrix(spec, split.validation, index), target_matrix(spec, split.validation))

    def progress(epoch, hist):
        logger.info("%s epoch %d train_loss=%.6f val_loss=%.6f val_auc=%.4f",
                    variant.value, epoch + 1, hist.train_loss[-1], hist.val_loss[-1], hist.val_auc[-1])

    trained, history = train(net, train_set, val_set, config, progress=progress)
    model_path = out / f"model_{variant.value}.txt"
    save_mlp(model_path, trained, spec, config, extra={"split_seed": args.seed, "profile": args.profile})
    curves = out / f"curves_{variant.value}.csv"
    write_curves_csv(history, curves)
    return inputs, [model_path, curves]


def cmd_eval(args, out: Path):
    model_dir = Path(args.models)
    records = read_matches_csv(args.matches)
    inputs = [Path(args.matches)]
    models = {}
    split_seed = None
    for variant in Variant:
        path = model_dir / f"model_{variant.value}.txt"
        if not path.is_file():
            continue
        model, spec, header = load_mlp(path)
        seed = header.get("extra", {}).get("split_seed", DEFAULT_SEED)
        if split_seed is not None and seed != split_seed:
            raise UsageError("models were trained on different splits")
        split_seed = seed
        curves = model_dir / f"curves_{variant.value}.csv"
        history = read_curves_csv(curves) if curves.is_file() else None
        models[variant.value] = TrainedModel(model, spec, history)
        inputs.append(path)
    if not models:
        raise UsageError(f"no model_nn*.txt files in {model_dir}")
    index = None
    if "nn3" in models:
        if not args.characters or not args.heroes:
            raise UsageError("evaluating nn3 needs --characters and --heroes")
        index = _character_index(args.characters, args.heroes)
        inputs += [*map(Path, args.characters), *map(Path, args.heroes)]
    split = split_dataset(records, seed=split_seed)
    reports = build_report(models, split, index, out)
    for name in sorted(reports):
        cells = ", ".join(f"{d}={m.auc:.3f} (ties {m.tie_fraction:.3f})" for d, m in reports[name].datasets.items())
        print(f"{name.upper()}: {cells}")
    outputs = [out / "table2.csv", out / "ties.csv"] + [out / f"curves_{n}.csv" for n, m in models.items() if m.history]
    return inputs, outputs


def cmd_drift(args, out: Path):
    model = load_cluster_model(args.model)
    ref = load_feature_table(args.reference)
    new = load_feature_table(args.new)
    ref_matrix, ref_unseen = align_matrix(ref, model.columns, unseen="drop")
    new_matrix, new_unseen = align_matrix(new, model.columns, unseen="drop")
    report = drift_divergence(assign(model, ref_matrix), assign(model, new_matrix), model.k, args.threshold)
    unseen = sorted(set(new_unseen) - set(ref_unseen))
    summary = {
        "reference_patch": ref.patch,
        "new_patch": new.patch,
        "divergence": report.divergence,
        "threshold": report.threshold,
        "flagged": report.flagged,
        "unseen_columns": unseen,
        "classification": classify_change(unseen, report),
    }
    (out / "drift.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    with open(out / "drift.csv", "w", encoding="utf-8") as fh:
        fh.write("cluster,reference,new\n")
        for i, (p, q) in enumerate(zip(report.reference_histogram, report.new_histogram)):
            fh.write(f"{i},{p!r},{q!r}\n")
    print(f"{ref.patch} -> {new.patch}: JS={report.divergence:.4f} ({summary['classification']})")
    return [Path(args.model), Path(args.reference), Path(args.new)], [out / "drift.json", out / "drift.csv"]


# --- parser ------------------------------------------------------------------------


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, type=Path, help="output directory")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--config", help="key=value file; command-line flags win")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="patchclust", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    subs = {}

    p = sub.add_parser("ingest", parents=[common], help="constants JSON -> feature CSV")
    p.add_argument("--constants", required=True, help="directory with one subdirectory per patch")
    p.add_argument("--patches", nargs="+", required=True)
    p.add_argument("--aliases", help="alias CSV (default: bundled map)")
    p.set_defaults(func=cmd_ingest)
    subs["ingest"] = p

    p = sub.add_parser("cluster", parents=[common], help="fit K-Means and select K")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--k-min", type=int, default=DEFAULT_ELBOW_RANGE[0])
    p.add_argument("--k-max", type=int, default=DEFAULT_ELBOW_RANGE[1])
    p.add_argument("--k", type=int, help="skip selection and fit this K")
    p.add_argument("--sse-min", type=int, help="widen the SSE-only elbow grid")
    p.add_argument("--sse-max", type=int)
    p.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
    p.set_defaults(func=cmd_cluster)
    subs["cluster"] = p

    p = sub.add_parser("encode", parents=[common], help="character / lineup vectors with frozen centroids")
    p.add_argument("--model", required=True)
    p.add_argument("--features", nargs="+")
    p.add_argument("--features-dir")
    p.add_argument("--patches", "--patch", nargs="+", dest="patches")
    p.add_argument("--unseen", choices=("error", "drop"), default="drop",
                   help="what to do with feature columns absent at fit time")
    p.add_argument("--matches")
    p.add_argument("--heroes", nargs="+")
    p.set_defaults(func=cmd_encode)
    subs["encode"] = p

    p = sub.add_parser("fetch", parents=[common], help="OpenDota explorer -> match CSV")
    p.add_argument("--patches", nargs="+", required=True)
    p.add_argument("--base-url", default=DEFAULT_BASE_URL)
    p.add_argument("--api-key")
    p.add_argument("--rate-limit", type=float, default=1.0, help="maximum requests per second")
    p.add_argument("--page-size", type=int, default=PAGE_SIZE)
    p.add_argument("--max-pages", type=int)
    p.set_defaults(func=cmd_fetch)
    subs["fetch"] = p

    p = sub.add_parser("synth", parents=[common], help="synthetic matches with known signal")
    defaults = SyntheticConfig()
    p.add_argument("--n-matches", type=int, default=defaults.n_matches)
    p.add_argument("--k", type=int, default=defaults.k)
    p.add_argument("--n-characters", type=int, default=defaults.n_characters)
    p.add_argument("--noise-std", type=float, default=defaults.noise_std)
    p.add_argument("--new-character-fraction", type=float, default=defaults.new_character_fraction)
    p.add_argument("--rework-fraction", type=float, default=defaults.rework_fraction)
    p.set_defaults(func=cmd_synth)
    subs["synth"] = p

    p = sub.add_parser("train", parents=[common], help="train one network variant")
    p.add_argument("--variant", required=True, choices=[v.value for v in Variant])
    p.add_argument("--matches", required=True)
    p.add_argument("--characters", nargs="+")
    p.add_argument("--heroes", nargs="+")
    p.add_argument("--max-id", type=int, help="nn2 id space (default: largest id in the training split)")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--profile", choices=("full", "test"), default="full",
                   help=f"'test' divides hidden widths by {TEST_PROFILE_FACTOR}")
    p.set_defaults(func=cmd_train)
    subs["train"] = p

    p = sub.add_parser("eval", parents=[common], help="AUC table, tie counts and curves")
    p.add_argument("--models", required=True, help="directory holding model_nn*.txt")
    p.add_argument("--matches", required=True)
    p.add_argument("--characters", nargs="+")
    p.add_argument("--heroes", nargs="+")
    p.set_defaults(func=cmd_eval)
    subs["eval"] = p

    p = sub.add_parser("drift", parents=[common], help="cluster-mix drift between two patches")
    p.add_argument("--model", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--new", required=True)
    p.add_argument("--threshold", type=float, default=DRIFT_THRESHOLD)
    p.set_defaults(func=cmd_drift)
    subs["drift"] = p
    return parser, subs


def read_config(path: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _apply_config(sub: argparse.ArgumentParser, config: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in config.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"unknown config key {key!r}")
        if action.nargs in ("+", "*"):
            items = value.replace(",", " ").split()
            defaults[key] = [action.type(v) if action.type else v for v in items]
        elif isinstance(action, argparse._StoreTrueAction):
            defaults[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = action.type(value) if action.type else value
        action.required = False
    sub.set_defaults(**defaults)


def _config_path(argv: Sequence[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        config_path = _config_path(argv)
        if config_path and argv and argv[0] in subs:
            _apply_config(subs[argv[0]], read_config(config_path))
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, OSError) as exc:
        print(f"patchclust: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        inputs, outputs = args.func(args, out)
        _write_manifest(out, args.command, args, inputs, outputs)
    except UsageError as exc:
        print(f"patchclust {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NetworkError as exc:
        print(f"patchclust {args.command}: network error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except (DataError, PatchClustError, OSError, ValueError) as exc:
        print(f"patchclust {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run())
