"""Console entry points: one small script per figure kind.

Each takes --csv and --out plus whatever its figure needs and exits 0 on
success, 1 when the data cannot be drawn (missing column, no sentinel
rows, underivable threshold), 2 on bad usage.
"""

from __future__ import annotations

import argparse
import sys

from .figures import FigureSpec, plot_detection, plot_states, plot_sweep


def _parse_ints(text):
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _parse_floats(text):
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _base_parser(prog, description):
    ap = argparse.ArgumentParser(prog=prog, description=description)
    ap.add_argument("--csv", required=True, help="input CSV file")
    ap.add_argument("--out", required=True, help="output image path")
    return ap


def _render(build_spec, plot, argv):
    try:
        spec = build_spec()
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    try:
        path = plot(spec)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


def main_states(argv=None):
    ap = _base_parser("attackfigs-states",
                      "State trajectories vs. target from a trajectory CSV.")
    ap.add_argument("--states", default="",
                    help="comma-separated state indices (default: all)")
    ap.add_argument("--targets", default="",
                    help="comma-separated target values, one per state")
    args = ap.parse_args(argv)

    def build():
        return FigureSpec(input_csv=args.csv, kind="states",
                          output_path=args.out,
                          state_indices=_parse_ints(args.states),
                          targets=_parse_floats(args.targets))

    return _render(build, plot_states, argv)


def main_detection(argv=None):
    ap = _base_parser("attackfigs-detection",
                      "Detection statistic of attacked and nominal runs.")
    ap.add_argument("--threshold", type=float, default=None,
                    help="alarm threshold (default: inferred from alarm flags)")
    args = ap.parse_args(argv)

    def build():
        return FigureSpec(input_csv=args.csv, kind="detection",
                          output_path=args.out, threshold=args.threshold)

    return _render(build, plot_detection, argv)


def main_sweep(argv=None):
    ap = _base_parser("attackfigs-sweep",
                      "Detection/disruption cost trade-off over alpha.")
    args = ap.parse_args(argv)

    def build():
        return FigureSpec(input_csv=args.csv, kind="sweep",
                          output_path=args.out)

    return _render(build, plot_sweep, argv)
