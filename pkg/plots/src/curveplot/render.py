"""Training-curve rendering for run CSV logs.

Reads the experiment runner's per-run CSV files (columns: run_id, seed,
episode, return_agent_1, return_agent_2, return_total, epsilon, mean_loss,
nash_fallbacks), smooths the three return columns with a trailing moving
average, and draws one panel per run with the fixed series coloring:
left arm orange, right arm green, total blue.

Usage:
    curveplot 'results/case1_maximin/*_r*.csv' --out returns.svg --smooth 10
"""

from __future__ import annotations

import argparse
import glob
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
from matplotlib.figure import Figure

REQUIRED_COLUMNS = (
    "run_id",
    "seed",
    "episode",
    "return_agent_1",
    "return_agent_2",
    "return_total",
)

SERIES_COLORS = {
    "left arm": "orange",
    "right arm": "green",
    "total": "blue",
}


class SchemaError(ValueError):
    """The input CSV does not match the documented run-log schema."""


@dataclass
class RunSeries:
    run_id: str
    episodes: list[int]
    left: list[float]
    right: list[float]
    total: list[float]


@dataclass
class CurveSpec:
    """What to render: inputs, destination, and smoothing window."""

    inputs: list[Path]
    output: Path
    smoothing: int = 10

    def __post_init__(self) -> None:
        self.inputs = [Path(p) for p in self.inputs]
        self.output = Path(self.output)
        if self.smoothing < 1:
            raise ValueError("smoothing window must be >= 1")
        if not self.inputs:
            raise ValueError("no input CSV files given")


def moving_average(values: list[float], window: int) -> list[float]:
    """Trailing mean over up to `window` samples; early points use what exists."""
    out = []
    acc = 0.0
    for i, v in enumerate(values):
        acc += v
        if i >= window:
            acc -= values[i - window]
        out.append(acc / min(i + 1, window))
    return out


def load_run(path: Path) -> RunSeries:
    """Parse one run CSV, failing with the offending column named."""
    with open(path, newline="") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise SchemaError(f"{path}: file is empty")
    header = lines[0].split(",")
    for column in REQUIRED_COLUMNS:
        if column not in header:
            raise SchemaError(f"{path}: missing column: {column}")
    if len(lines) == 1:
        raise SchemaError(f"{path}: no data rows after the header")
    idx = {name: header.index(name) for name in REQUIRED_COLUMNS}
    episodes, left, right, total = [], [], [], []
    run_id = ""
    for ln in lines[1:]:
        cells = ln.split(",")
        run_id = cells[idx["run_id"]]
        for column, bucket, caster in (
            ("episode", episodes, int),
            ("return_agent_1", left, float),
            ("return_agent_2", right, float),
            ("return_total", total, float),
        ):
            raw = cells[idx[column]]
            try:
                bucket.append(caster(raw))
            except ValueError:
                raise SchemaError(f"{path}: non-numeric value {raw!r} in column: {column}") from None
    return RunSeries(run_id, episodes, left, right, total)


def build_figure(spec: CurveSpec) -> Figure:
    """One panel per run, three smoothed series each, fixed color mapping."""
    runs = [load_run(p) for p in spec.inputs]
    cols = min(3, len(runs))
    rows = math.ceil(len(runs) / cols)
    fig = Figure(figsize=(5.0 * cols, 3.4 * rows))
    axes = fig.subplots(rows, cols, squeeze=False)
    for cell, run in enumerate(runs):
        ax = axes[cell // cols][cell % cols]
        series = {
            "left arm": run.left,
            "right arm": run.right,
            "total": run.total,
        }
        for label, values in series.items():
            ax.plot(
                run.episodes,
                moving_average(values, spec.smoothing),
                color=SERIES_COLORS[label],
                label=label,
                linewidth=1.2,
            )
        ax.set_title(run.run_id)
        ax.set_xlabel("episode")
        ax.set_ylabel("return")
        ax.legend(loc="best", fontsize=8)
    for cell in range(len(runs), rows * cols):
        axes[cell // cols][cell % cols].axis("off")
    fig.tight_layout()
    return fig


def render(spec: CurveSpec) -> Path:
    """Build and write the figure; SVG output is byte-deterministic.

    The SVG backend salts its element ids and stamps a date by default;
    both are pinned so rendering the same inputs twice gives equal bytes.
    """
    fig = build_figure(spec)
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    if spec.output.suffix == ".svg":
        with matplotlib.rc_context({"svg.hashsalt": "curveplot"}):
            fig.savefig(spec.output, metadata={"Date": None})
    else:
        fig.savefig(spec.output, dpi=150)
    return spec.output


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="curveplot", description=__doc__.splitlines()[0])
    parser.add_argument("inputs", nargs="+", help="run CSV paths or globs")
    parser.add_argument("--out", default="returns.svg", help="output image path (.svg or .png)")
    parser.add_argument("--smooth", type=int, default=10, help="moving-average window (episodes)")
    args = parser.parse_args(argv)

    paths: list[str] = []
    for pattern in args.inputs:
        matched = sorted(glob.glob(pattern))
        paths.extend(matched if matched else [pattern])
    try:
        spec = CurveSpec(inputs=[Path(p) for p in paths], output=Path(args.out), smoothing=args.smooth)
        out = render(spec)
    except (SchemaError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
