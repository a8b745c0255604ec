"""Render recipes into log-log PNG panels from result CSVs.

Rendering is read-only and deterministic: a fixed style sheet, no
timestamps, and inputs are never modified.  Failed rows (status != ok) are
excluded and counted in a caption footnote; residual energies below 1e-14
are floored there for the log axes and counted as well.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .recipes import CSV_HEADER, FigureRecipe, Panel, RecipeError

LOG_FLOOR = 1e-14

NUMERIC_COLUMNS = {
    "n_spins", "p", "gamma", "t_f", "beta", "eta_g2", "omega_c", "T0", "Tf",
    "dt", "bin_tol", "residual_energy", "fidelity",
}


class DataError(ValueError):
    """Input CSV missing, empty, or not in the result-table schema."""


@dataclass
class RenderStats:
    """What a render did, for tests and footnote bookkeeping."""

    paths: list[Path]
    rows_used: int
    rows_failed: int
    rows_floored: int


def load_rows(path: str | Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"input CSV not found: {path}")
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    if not lines:
        raise DataError(f"{path}: empty results file")
    header = lines[0].strip()
    if header != CSV_HEADER:
        got = header.split(",")
        expected = CSV_HEADER.split(",")
        offending = next(
            (f"column {i} is {g!r}, expected {e!r}"
             for i, (g, e) in enumerate(zip(got, expected)) if g != e),
            f"{len(got)} columns, expected {len(expected)}",
        )
        raise DataError(f"{path}: schema mismatch ({offending})")
    rows = []
    for raw in csv.DictReader(lines):
        row: dict = dict(raw)
        for col in NUMERIC_COLUMNS:
            row[col] = float(row[col]) if row[col] != "" else None
        rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return rows


def _coupling_label(val) -> str:
    if val in (None, 0.0):
        return "closed"
    exponent = math.log10(val)
    if abs(exponent - round(exponent)) < 1e-9:
        return rf"$\eta g^2 = 10^{{{int(round(exponent))}}}$"
    return rf"$\eta g^2 = {val:g}$"


def _format_group_label(keys: list[str], values: tuple) -> str:
    byname = dict(zip(keys, values))
    engine = byname.get("engine")
    parts = []
    for key, val in zip(keys, values):
        if key == "engine":
            if val == "closed":
                parts.append("closed")
            elif val == "sa":
                parts.append("SA")
            # lindblad curves are labeled by their coupling instead
        elif key == "eta_g2":
            if engine in ("closed", "sa"):
                continue
            parts.append(_coupling_label(val))
        elif key == "n_spins":
            parts.append(f"N = {int(val)}")
        elif key == "beta":
            if val is None:
                continue
            parts.append(r"$\beta = \infty$" if math.isinf(val)
                         else rf"$\beta = {val:g}$")
        elif key == "Tf":
            if val is not None:
                parts.append(rf"$T_f = {val:g}$")
        elif key == "p":
            parts.append(f"p = {int(val)}")
        else:
            parts.append(f"{key} = {val}")
    if not parts and engine == "lindblad":
        parts.append(_coupling_label(byname.get("eta_g2")))
    return ", ".join(parts) if parts else "all rows"


def _group_sort_key(values: tuple):
    def one(v):
        if v is None:
            return (0, 0.0, "")
        if isinstance(v, str):
            return (2, 0.0, v)
        return (1, float(v), "")

    return tuple(one(v) for v in values)


def _panel_groups(panel: Panel, rows: list[dict]):
    selected = []
    for row in rows:
        if row["status"] != "ok":
            continue
        keep = True
        for col, want in panel.filters.items():
            have = row[col]
            if col in NUMERIC_COLUMNS:
                want_f = math.inf if str(want) in ("inf", "Infinity") else float(want)
                keep = have is not None and (
                    have == want_f or (math.isinf(want_f) and math.isinf(have))
                )
            else:
                keep = str(have) == str(want)
            if not keep:
                break
        if keep:
            selected.append(row)
    groups: dict[tuple, list[dict]] = {}
    for row in selected:
        key = tuple(row[col] for col in panel.group_by)
        groups.setdefault(key, []).append(row)
    return groups


def render(
    recipe: FigureRecipe,
    out_dir: str | Path,
    *,
    data_dir: str | Path = ".",
) -> RenderStats:
    """Render every panel of the recipe; returns paths and row bookkeeping.

    Relative input paths are resolved against data_dir.  Raises DataError if
    an input is missing/empty or if, after excluding failed rows, a panel
    has nothing to draw.
    """
    recipe.validate()
    data_dir = Path(data_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows: list[dict] = []
    for rel in recipe.inputs:
        path = Path(rel)
        rows.extend(load_rows(path if path.is_absolute() else data_dir / path))
    n_failed = sum(1 for r in rows if r["status"] != "ok")

    style = resources.files("pspin_figures") / "style" / "pspin.mplstyle"
    paths = []
    used = 0
    floored = 0
    with plt.style.context(str(style)):
        for panel in recipe.panels:
            groups = _panel_groups(panel, rows)
            if not groups:
                raise DataError(
                    f"recipe {recipe.name!r}, panel {panel.name!r}: no valid rows"
                )
            fig, ax = plt.subplots()
            panel_floored = 0
            for key in sorted(groups, key=_group_sort_key):
                series = sorted(groups[key], key=lambda r: r[panel.x])
                x = np.array([r[panel.x] for r in series], dtype=float)
                y = np.array([r[panel.y] for r in series], dtype=float)
                panel_floored += int(np.sum(y < LOG_FLOOR))
                y = np.maximum(y, LOG_FLOOR)
                used += len(series)
                ax.plot(x, y, marker="o", markersize=4,
                        label=_format_group_label(panel.group_by, key))
            if panel.guide_t2:
                _draw_guide(ax, groups, panel)
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_xlabel(_axis_label(panel.x))
            ax.set_ylabel(_axis_label(panel.y))
            if panel.title:
                ax.set_title(panel.title)
            if panel.xlim:
                ax.set_xlim(panel.xlim)
            if panel.ylim:
                ax.set_ylim(panel.ylim)
            ax.legend(loc="best", fontsize=8)
            notes = []
            if n_failed:
                notes.append(f"{n_failed} failed rows excluded")
            if panel_floored:
                notes.append(f"{panel_floored} points floored at 1e-14")
            if notes:
                fig.text(0.01, 0.01, "; ".join(notes), fontsize=6, color="0.35")
            floored += panel_floored
            suffix = "" if len(recipe.panels) == 1 else f"_{panel.name}"
            target = out_dir / f"{recipe.name}{suffix}.png"
            fig.savefig(target)
            plt.close(fig)
            paths.append(target)
    return RenderStats(paths=paths, rows_used=used, rows_failed=n_failed,
                       rows_floored=floored)


def _axis_label(column: str) -> str:
    return {
        "t_f": r"annealing time $t_f$  [$\hbar/\Gamma$]",
        "residual_energy": r"residual energy per spin  [$\Gamma$]",
        "fidelity": "ground-state fidelity",
    }.get(column, column)


def _draw_guide(ax, groups: dict, panel: Panel) -> None:
    """Reference line ~ t^-2, anchored explicitly or on the lowest tail."""
    if panel.guide_anchor:
        x0, y0 = panel.guide_anchor
    else:
        x0, y0 = None, math.inf
        for series in groups.values():
            tail = max(series, key=lambda r: r[panel.x])
            y_val = max(tail[panel.y], LOG_FLOOR)
            if y_val < y0:
                x0, y0 = tail[panel.x], y_val
    xs = np.array([x0 / 30.0, x0 * 1.5])
    ax.plot(xs, y0 * (xs / x0) ** -2.0, linestyle="--", color="0.4",
            linewidth=1.0, label=r"$\propto t_f^{-2}$")
