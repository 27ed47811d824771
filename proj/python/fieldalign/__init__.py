"""Instance-based field alignment between two tabular data sources."""

from ._core import (
    NUL,
    AlignmentMatrix,
    CellScoreTable,
    DataSource,
    Error,
    Model,
    aggregate,
    align,
    best_matches,
    feature_counts,
    l1_confidence,
    load_model,
    load_table,
    one_to_one_matching,
    parse_table,
    profile_distances,
    sample_rows,
    score_cells,
    topk_score,
    train,
    value_histogram,
)

__all__ = [
    "NUL",
    "AlignmentMatrix",
    "CellScoreTable",
    "DataSource",
    "Error",
    "Model",
    "aggregate",
    "align",
    "best_matches",
    "feature_counts",
    "l1_confidence",
    "load_model",
    "load_table",
    "one_to_one_matching",
    "parse_table",
    "profile_distances",
    "sample_rows",
    "score_cells",
    "topk_score",
    "train",
    "value_histogram",
]

__version__ = "1.0.0"
