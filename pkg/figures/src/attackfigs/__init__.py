"""Static figures rendered from the attack simulator's CSV artifacts."""

from .figures import (
    FigureSpec,
    MissingColumnError,
    SweepData,
    derive_threshold,
    load_columns,
    load_sweep,
    plot_detection,
    plot_states,
    plot_sweep,
)

__all__ = [
    "FigureSpec",
    "MissingColumnError",
    "SweepData",
    "derive_threshold",
    "load_columns",
    "load_sweep",
    "plot_detection",
    "plot_states",
    "plot_sweep",
]
