"""Figure recipes: declarative YAML descriptions of log-log result panels.

A recipe names its input CSVs (paths relative to a data directory), and for
each panel the x/y columns, the grouping keys that split rows into curves,
optional row filters and axis ranges, and whether to draw the t^-2 guide.
Recipes may only reference columns of the result-table schema.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

# column layout of the pspin-anneal result tables (the external interface)
RESULT_COLUMNS = (
    "engine", "n_spins", "p", "gamma", "t_f", "beta", "eta_g2", "omega_c",
    "lamb_shift", "T0", "Tf", "dt", "bin_tol", "residual_energy", "fidelity",
    "status",
)
CSV_HEADER = ",".join(RESULT_COLUMNS)


class RecipeError(ValueError):
    """Malformed recipe or a reference to a column outside the schema."""


@dataclass
class Panel:
    name: str
    x: str = "t_f"
    y: str = "residual_energy"
    group_by: list[str] = field(default_factory=lambda: ["engine"])
    filters: dict[str, object] = field(default_factory=dict)
    title: str | None = None
    xlim: tuple[float, float] | None = None
    ylim: tuple[float, float] | None = None
    guide_t2: bool = False
    guide_anchor: tuple[float, float] | None = None

    def validate(self) -> None:
        for col in [self.x, self.y, *self.group_by, *self.filters]:
            if col not in RESULT_COLUMNS:
                raise RecipeError(f"panel {self.name!r} references unknown column {col!r}")


@dataclass
class FigureRecipe:
    name: str
    inputs: list[str]
    panels: list[Panel]

    def validate(self) -> None:
        if not self.inputs:
            raise RecipeError(f"recipe {self.name!r} lists no input CSVs")
        if not self.panels:
            raise RecipeError(f"recipe {self.name!r} has no panels")
        for panel in self.panels:
            panel.validate()


def _panel_from_mapping(idx: int, data: dict) -> Panel:
    known = {"name", "x", "y", "group_by", "filter", "title", "xlim", "ylim",
             "guide_t2", "guide_anchor"}
    unknown = set(data) - known
    if unknown:
        raise RecipeError(f"panel {idx}: unknown keys {sorted(unknown)}")
    group_by = data.get("group_by", ["engine"])
    if isinstance(group_by, str):
        group_by = [group_by]
    return Panel(
        name=str(data.get("name", f"panel{idx}")),
        x=str(data.get("x", "t_f")),
        y=str(data.get("y", "residual_energy")),
        group_by=[str(g) for g in group_by],
        filters=dict(data.get("filter", {})),
        title=data.get("title"),
        xlim=tuple(data["xlim"]) if data.get("xlim") else None,
        ylim=tuple(data["ylim"]) if data.get("ylim") else None,
        guide_t2=bool(data.get("guide_t2", False)),
        guide_anchor=tuple(data["guide_anchor"]) if data.get("guide_anchor") else None,
    )


def load_recipe(path: str | Path) -> FigureRecipe:
    path = Path(path)
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise RecipeError(f"{path}: recipe root must be a mapping")
    panels = [_panel_from_mapping(i, p) for i, p in enumerate(data.get("panels", []))]
    recipe = FigureRecipe(
        name=str(data.get("name", path.stem)),
        inputs=[str(p) for p in data.get("inputs", [])],
        panels=panels,
    )
    recipe.validate()
    return recipe
