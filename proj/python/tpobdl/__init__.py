"""Two-phase object-based SAR change detection."""

from ._core import (
    ConfigError,
    DegenerateClusteringError,
    DimensionError,
    Error,
    IoError,
    LabelError,
    __version__,
    col_shrink,
    default_config,
    detect,
    evaluate,
    fcm,
    generate_scene,
    slic,
    solve_lrsd,
    svt,
    vote,
)

__all__ = [
    "ConfigError",
    "DegenerateClusteringError",
    "DimensionError",
    "Error",
    "IoError",
    "LabelError",
    "__version__",
    "col_shrink",
    "default_config",
    "detect",
    "evaluate",
    "fcm",
    "generate_scene",
    "slic",
    "solve_lrsd",
    "svt",
    "vote",
]
