"""Render the three experiment figures from the simulator's CSV files.

The attack CLI leaves behind two kinds of artifact worth looking at:
per-run trajectory files (state paths, detection statistic, alarm flags)
and alpha-sweep files tracing the detection-vs-disruption trade-off.
This module turns them into static images:

  plot_states     one panel per chosen state, attacked vs. nominal path,
                  dotted line at the attack target, onset marker at t=0
  plot_detection  detection statistic of both runs plus the alarm threshold
  plot_sweep      J_d(alpha) and J_c(alpha) on log-x twin panels with the
                  limiting costs from the sentinel rows dashed in

Everything here is a pure file-to-file transform with a fixed style and
no timestamps: rendering the same CSV twice overwrites the image with
identical bytes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("states", "detection", "sweep")

_STYLE = {
    "figure.dpi": 110.0,
    "savefig.dpi": 150.0,
    "font.family": "DejaVu Sans",
    "font.size": 9.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
}

# Pinned so the PNG carries no version strings or dates.
_METADATA = {"Software": "attackfigs"}


class MissingColumnError(ValueError):
    """A referenced column is absent from the CSV header."""

    def __init__(self, column, path, header):
        self.column = column
        joined = ", ".join(header)
        super().__init__(f"{path}: column {column!r} not in header ({joined})")


@dataclass(frozen=True)
class FigureSpec:
    """What to draw: which CSV, which kind of figure, where to put it.

    ``state_indices`` and ``targets`` only matter for ``kind="states"``;
    ``threshold`` only for ``kind="detection"`` (when omitted it is
    estimated from the alarm flags recorded in the file).
    """

    input_csv: str
    kind: str
    output_path: str
    state_indices: tuple = ()
    targets: tuple = ()
    threshold: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "state_indices",
                           tuple(int(i) for i in self.state_indices))
        object.__setattr__(self, "targets",
                           tuple(float(v) for v in self.targets))
        if any(i < 0 for i in self.state_indices):
            raise ValueError("state indices must be nonnegative")
        if self.targets and len(self.targets) != len(self.state_indices):
            raise ValueError(f"got {len(self.targets)} targets for "
                             f"{len(self.state_indices)} selected states")


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, no header row") from None
        rows = [row for row in reader if row]
    return header, rows


def _pull(path, header, rows, names):
    """Extract the named columns as float arrays, checking the header."""
    cols = {}
    for name in names:
        if name not in header:
            raise MissingColumnError(name, path, header)
        j = header.index(name)
        cols[name] = np.array([float(row[j]) for row in rows])
    return cols


def load_columns(path, names):
    """Read the named columns of a CSV as float arrays, in file order."""
    header, rows = _read_rows(path)
    return _pull(path, header, rows, list(names))


def _default_state_indices(header):
    out = []
    while f"x{len(out)}" in header:
        out.append(len(out))
    return tuple(out)


def plot_states(spec):
    """Write the state-trajectory figure and return its path.

    One panel per selected state: the attacked run solid, the nominal
    twin dash-dotted, a dotted horizontal line at the configured target
    (when given) and a vertical marker where the attack switches on.
    """
    header, rows = _read_rows(spec.input_csv)
    indices = spec.state_indices or _default_state_indices(header)
    if not indices:
        raise MissingColumnError("x0", spec.input_csv, header)
    names = ["t"]
    for i in indices:
        names += [f"x{i}", f"x_nom{i}"]
    cols = _pull(spec.input_csv, header, rows, names)
    t = cols["t"]

    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(len(indices), 1, sharex=True, squeeze=False,
                                 figsize=(6.4, 1.9 * len(indices) + 0.9),
                                 layout="constrained")
        for slot, i in enumerate(indices):
            ax = axes[slot, 0]
            ax.plot(t, cols[f"x{i}"], color="C0", label="attacked")
            ax.plot(t, cols[f"x_nom{i}"], color="C1", ls="-.", label="nominal")
            if spec.targets:
                ax.axhline(spec.targets[slot], color="k", ls=":", lw=1.2,
                           label="target")
            ax.axvline(0.0, color="0.45", lw=0.9)
            ax.set_ylabel(f"x{i}")
        axes[0, 0].legend(loc="best", fontsize=8)
        axes[-1, 0].set_xlabel("t")
        fig.savefig(spec.output_path, metadata=_METADATA)
        plt.close(fig)
    return spec.output_path


def derive_threshold(g, alarms, path="<data>"):
    """Recover the alarm threshold from recorded statistics and flags.

    The detector fires exactly when g exceeds the threshold, so every
    fired value sits above it and every quiet value at or below it; the
    midpoint of that gap is returned.  Fails when the file never fired
    (or never stayed quiet), in which case the threshold has to be
    supplied explicitly.
    """
    g = np.asarray(g, dtype=float)
    alarms = np.asarray(alarms, dtype=float)
    fired = g[alarms > 0.5]
    quiet = g[alarms <= 0.5]
    if fired.size == 0 or quiet.size == 0 or quiet.max() >= fired.min():
        raise ValueError(f"{path}: cannot infer the alarm threshold from the "
                         "alarm flags; pass one explicitly")
    return 0.5 * (quiet.max() + fired.min())


def plot_detection(spec):
    """Write the detection-statistic figure and return its path.

    Attacked and nominal g_t overlaid, with a dashed line at the alarm
    threshold and the attack-onset marker at t=0.
    """
    header, rows = _read_rows(spec.input_csv)
    cols = _pull(spec.input_csv, header, rows, ["t", "g_sys", "g_nom"])
    tau = spec.threshold
    if tau is None:
        flags = _pull(spec.input_csv, header, rows, ["alarm_sys", "alarm_nom"])
        tau = derive_threshold(
            np.concatenate([cols["g_sys"], cols["g_nom"]]),
            np.concatenate([flags["alarm_sys"], flags["alarm_nom"]]),
            spec.input_csv)

    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 3.2), layout="constrained")
        ax.plot(cols["t"], cols["g_sys"], color="C0", label="attacked")
        ax.plot(cols["t"], cols["g_nom"], color="C1", ls="-.", label="nominal")
        ax.axhline(tau, color="C3", ls="--", lw=1.2, label="threshold")
        ax.axvline(0.0, color="0.45", lw=0.9)
        ax.set_xlabel("t")
        ax.set_ylabel("detection statistic")
        ax.legend(loc="best", fontsize=8)
        fig.savefig(spec.output_path, metadata=_METADATA)
        plt.close(fig)
    return spec.output_path


@dataclass(frozen=True)
class SweepData:
    """Finite-alpha sweep curves plus the two sentinel-row limits."""

    alpha: np.ndarray
    J_d: np.ndarray
    J_c: np.ndarray
    detection_floor: float
    disruption_floor: float


def load_sweep(path):
    """Parse a sweep CSV into curves and asymptotes.

    Sentinel rows (alpha written as "0" and "inf") carry the limiting
    costs and become the dashed asymptote levels; finite-alpha rows are
    kept only when their convergence flag is true, so the curves render
    without gaps.
    """
    header, rows = _read_rows(path)
    for name in ("alpha", "J_d", "J_c", "converged"):
        if name not in header:
            raise MissingColumnError(name, path, header)
    ia = header.index("alpha")
    id_ = header.index("J_d")
    ic = header.index("J_c")
    iconv = header.index("converged")

    floor_d = floor_c = None
    points = []
    for row in rows:
        tag = row[ia].strip()
        if tag == "0":
            floor_d = float(row[id_])
        elif tag == "inf":
            floor_c = float(row[ic])
        elif row[iconv].strip().lower() == "true":
            points.append((float(tag), float(row[id_]), float(row[ic])))
    if floor_d is None or floor_c is None:
        raise ValueError(f"{path}: missing the alpha=0 / alpha=inf sentinel "
                         "rows that carry the limiting costs")
    if not points:
        raise ValueError(f"{path}: no converged finite-alpha rows to plot")
    points.sort()
    arr = np.asarray(points)
    return SweepData(alpha=arr[:, 0], J_d=arr[:, 1], J_c=arr[:, 2],
                     detection_floor=floor_d, disruption_floor=floor_c)


def plot_sweep(spec):
    """Write the trade-off figure and return its path.

    Two panels sharing a log alpha axis: detection cost on the left,
    disruption cost on the right, each with its limiting value from the
    sentinel rows drawn as a dashed horizontal line.
    """
    data = load_sweep(spec.input_csv)
    with plt.rc_context(_STYLE):
        fig, (axd, axc) = plt.subplots(1, 2, figsize=(7.6, 3.1),
                                       layout="constrained")
        for ax in (axd, axc):
            ax.set_xscale("log")
            ax.set_xlabel(r"$\alpha$")
        axd.plot(data.alpha, data.J_d, color="C0", marker="o", ms=3.5)
        axd.axhline(data.detection_floor, color="k", ls="--", lw=1.1,
                    label=r"$\alpha \to 0$ limit")
        axd.set_ylabel(r"$J_d$")
        axd.legend(loc="best", fontsize=8)
        axc.plot(data.alpha, data.J_c, color="C1", marker="o", ms=3.5)
        axc.axhline(data.disruption_floor, color="k", ls="--", lw=1.1,
                    label=r"$\alpha \to \infty$ limit")
        axc.set_ylabel(r"$J_c$")
        axc.legend(loc="best", fontsize=8)
        fig.savefig(spec.output_path, metadata=_METADATA)
        plt.close(fig)
    return spec.output_path
