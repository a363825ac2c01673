"""Render a figure job: one CSV in, one image file out.

Four kinds of figure are supported:

``line``
    One or more y columns plotted against an x column.  An optional
    ``yerr`` column adds error bars to the first y series.
``fit_line``
    Scatter of a single y column against x, overlaid with its
    least-squares line.  The fitted intercept and slope are printed to
    standard output (six decimals).  An optional ``theory`` column is
    drawn as a dashed reference line.
``heatmap``
    A long-format table (``row``, ``col``, ``value``) pivoted into a
    grid and drawn with a colorbar.  Cells absent from the table render
    blank.
``surface_lines``
    One line per distinct value of a ``group`` column, all sharing the
    same x/y columns.

The output format follows the file extension (.svg default, .png
supported).  Rendering is deterministic: the matplotlib hash salt is
pinned and the SVG date stamp is stripped, so the same CSV produces the
same bytes.
"""

from __future__ import annotations

import csv
import sys
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("line", "fit_line", "heatmap", "surface_lines")

# columns each kind reads, beyond the shared optional ones
_REQUIRED_PARAMS = {
    "line": ("x", "y"),
    "fit_line": ("x", "y"),
    "heatmap": ("row", "col", "value"),
    "surface_lines": ("x", "y", "group"),
}


@dataclass(frozen=True)
class FigureJob:
    """Everything needed to draw one figure.

    ``y`` is a tuple of column names so a single plot can carry a
    measured series next to its theory column; ``fit_line`` and
    ``surface_lines`` require exactly one y column.
    """

    kind: str
    input: str
    output: str
    x: str | None = None
    y: tuple[str, ...] = ()
    yerr: str | None = None
    theory: str | None = None
    row: str | None = None
    col: str | None = None
    value: str | None = None
    group: str | None = None
    title: str | None = None
    xlabel: str | None = None
    ylabel: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(
                f"unknown figure kind {self.kind!r}; expected one of {', '.join(KINDS)}"
            )
        if not self.input:
            raise ValueError("figure job needs an input CSV path")
        if not self.output:
            raise ValueError("figure job needs an output image path")
        for name in _REQUIRED_PARAMS[self.kind]:
            if not getattr(self, name):
                raise ValueError(f"kind {self.kind!r} requires {name!r}")
        if self.kind in ("fit_line", "surface_lines") and len(self.y) != 1:
            raise ValueError(
                f"kind {self.kind!r} takes exactly one y column, got {list(self.y)}"
            )


def _read_table(path: str) -> tuple[list[str], list[dict[str, str]]]:
    """Load a CSV into (header, rows); reject files with nothing to plot."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fieldnames = list(reader.fieldnames or [])
        rows = list(reader)
    if not fieldnames or not rows:
        raise ValueError(f"empty CSV: {path}")
    return fieldnames, rows


def _check_columns(job: FigureJob, fieldnames: list[str]) -> None:
    needed = []
    if job.kind == "heatmap":
        needed = [job.row, job.col, job.value]
    else:
        needed = [job.x, *job.y]
        if job.kind == "surface_lines":
            needed.append(job.group)
    for optional in (job.yerr, job.theory):
        if optional:
            needed.append(optional)
    missing = [c for c in needed if c not in fieldnames]
    if missing:
        raise ValueError(
            f"{job.input}: missing columns {sorted(missing)}; "
            f"expected {sorted(set(needed))}, found {sorted(fieldnames)}"
        )


def _column(rows: list[dict[str, str]], name: str) -> np.ndarray:
    out = np.empty(len(rows))
    for i, row in enumerate(rows):
        raw = row[name]
        try:
            out[i] = float(raw)
        except (TypeError, ValueError):
            raise ValueError(
                f"column {name!r}: could not parse {raw!r} as a number"
            ) from None
    return out


def fit_series(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares line through (x, y); returns (intercept, slope)."""
    slope, intercept = np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)
    return float(intercept), float(slope)


def _axis_order(raw: list[str]) -> list[str]:
    """Order axis labels numerically when they all parse, else as text."""
    seen = list(dict.fromkeys(raw))
    try:
        return sorted(seen, key=float)
    except ValueError:
        return sorted(seen)


def pivot_grid(
    rows: list[dict[str, str]], row: str, col: str, value: str
) -> tuple[list[str], list[str], np.ndarray]:
    """Pivot a long-format table into (row_labels, col_labels, grid).

    Cells with no entry come back as NaN; duplicate entries keep the
    last one, matching how the pricing CLI appends rows.
    """
    row_vals = _axis_order([r[row] for r in rows])
    col_vals = _axis_order([r[col] for r in rows])
    grid = np.full((len(row_vals), len(col_vals)), np.nan)
    ri = {v: i for i, v in enumerate(row_vals)}
    ci = {v: i for i, v in enumerate(col_vals)}
    for r in rows:
        try:
            grid[ri[r[row]], ci[r[col]]] = float(r[value])
        except (TypeError, ValueError):
            raise ValueError(
                f"column {value!r}: could not parse {r[value]!r} as a number"
            ) from None
    return row_vals, col_vals, grid


def _draw_line(job: FigureJob, rows: list[dict[str, str]], ax) -> None:
    x = _column(rows, job.x)
    order = np.argsort(x, kind="stable")
    x = x[order]
    for i, name in enumerate(job.y):
        y = _column(rows, name)[order]
        if i == 0 and job.yerr:
            err = _column(rows, job.yerr)[order]
            ax.errorbar(x, y, yerr=err, marker="o", capsize=3, label=name)
        else:
            style = {"linestyle": "--"} if i > 0 else {"marker": "o"}
            ax.plot(x, y, label=name, **style)
    if job.theory:
        ax.plot(x, _column(rows, job.theory)[order], linestyle="--", label=job.theory)
    if len(job.y) > 1 or job.yerr or job.theory:
        ax.legend()


def _draw_fit_line(job: FigureJob, rows: list[dict[str, str]], ax) -> None:
    x = _column(rows, job.x)
    y = _column(rows, job.y[0])
    intercept, slope = fit_series(x, y)
    print(f"intercept {intercept:.6f}")
    print(f"slope {slope:.6f}")
    order = np.argsort(x, kind="stable")
    ax.plot(x[order], y[order], "o", label=job.y[0])
    xs = np.array([x.min(), x.max()])
    ax.plot(xs, intercept + slope * xs, label=f"fit: {intercept:.4g} + {slope:.4g}x")
    if job.theory:
        ax.plot(
            x[order],
            _column(rows, job.theory)[order],
            linestyle="--",
            label=job.theory,
        )
    ax.legend()


def _draw_heatmap(job: FigureJob, rows: list[dict[str, str]], ax, fig) -> None:
    row_vals, col_vals, grid = pivot_grid(rows, job.row, job.col, job.value)
    im = ax.imshow(grid, aspect="auto", origin="upper")
    ax.set_xticks(range(len(col_vals)), labels=col_vals)
    ax.set_yticks(range(len(row_vals)), labels=row_vals)
    fig.colorbar(im, ax=ax, label=job.value)


def _draw_surface_lines(job: FigureJob, rows: list[dict[str, str]], ax) -> None:
    groups = _axis_order([r[job.group] for r in rows])
    for g in groups:
        sub = [r for r in rows if r[job.group] == g]
        x = _column(sub, job.x)
        order = np.argsort(x, kind="stable")
        y = _column(sub, job.y[0])
        ax.plot(x[order], y[order], marker="o", label=f"{job.group}={g}")
    ax.legend()


def render(job: FigureJob) -> str:
    """Draw ``job`` and write the image; returns the output path.

    For ``fit_line`` jobs the fitted intercept and slope are also
    printed to standard output, six decimals each.
    """
    fieldnames, rows = _read_table(job.input)
    _check_columns(job, fieldnames)

    plt.rcParams["svg.hashsalt"] = "figure-kit"
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    try:
        if job.kind == "line":
            _draw_line(job, rows, ax)
        elif job.kind == "fit_line":
            _draw_fit_line(job, rows, ax)
        elif job.kind == "heatmap":
            _draw_heatmap(job, rows, ax, fig)
        else:
            _draw_surface_lines(job, rows, ax)

        if job.kind == "heatmap":
            ax.set_xlabel(job.xlabel or job.col)
            ax.set_ylabel(job.ylabel or job.row)
        else:
            ax.set_xlabel(job.xlabel or job.x)
            ax.set_ylabel(job.ylabel or job.y[0])
        if job.title:
            ax.set_title(job.title)
        fig.tight_layout()
        if job.output.lower().endswith(".svg"):
            fig.savefig(job.output, metadata={"Date": None})
        else:
            fig.savefig(job.output)
    finally:
        plt.close(fig)
    return job.output


_JOB_KEYS = {
    "kind",
    "input",
    "output",
    "x",
    "y",
    "yerr",
    "theory",
    "row",
    "col",
    "value",
    "group",
    "title",
    "xlabel",
    "ylabel",
}


def _job_from_dict(block: dict) -> FigureJob:
    unknown = sorted(set(block) - _JOB_KEYS)
    if unknown:
        raise ValueError(
            f"unknown job keys {unknown}; expected a subset of {sorted(_JOB_KEYS)}"
        )
    kwargs = dict(block)
    y = kwargs.get("y")
    if isinstance(y, str):
        kwargs["y"] = (y,)
    elif y is not None:
        kwargs["y"] = tuple(y)
    return FigureJob(**kwargs)


def load_jobs(path: str) -> list[FigureJob]:
    """Read figure jobs from a TOML file.

    The file holds either a single ``[figure]`` table, a ``[[figure]]``
    list, or bare top-level keys describing one job.
    """
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    block = raw.get("figure", raw)
    if isinstance(block, dict):
        blocks = [block]
    elif isinstance(block, list):
        blocks = block
    else:
        raise ValueError(f"{path}: 'figure' must be a table or an array of tables")
    if not blocks:
        raise ValueError(f"{path}: no figure jobs found")
    return [_job_from_dict(b) for b in blocks]
