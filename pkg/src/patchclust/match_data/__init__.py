"""Match acquisition, validation, persistence, splitting and synthesis."""

from .opendota import ExplorerClient, build_query, fetch_matches, row_to_record
from .records import (
    HOLDOUT_PATCHES,
    MATCH_CSV_HEADER,
    DatasetSplit,
    MatchRecord,
    filter_valid,
    read_matches_csv,
    split_dataset,
    write_matches_csv,
)
from .synthetic import SyntheticConfig, SyntheticCorpus, generate_synthetic, signal_scores

__all__ = [
    "HOLDOUT_PATCHES",
    "MATCH_CSV_HEADER",
    "DatasetSplit",
    "ExplorerClient",
    "MatchRecord",
    "SyntheticConfig",
    "SyntheticCorpus",
    "build_query",
    "fetch_matches",
    "filter_valid",
    "generate_synthetic",
    "read_matches_csv",
    "row_to_record",
    "signal_scores",
    "split_dataset",
    "write_matches_csv",
]
