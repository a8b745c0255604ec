"""Figure regeneration CLI: `pspin-figures render <recipe>|all --out DIR`."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .recipes import RecipeError, load_recipe
from .render import DataError, render

BUNDLED_RECIPES = Path(__file__).resolve().parents[2] / "recipes"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="pspin-figures",
        description="Regenerate figures from pspin-anneal result CSVs",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one recipe, or 'all'")
    p.add_argument("recipe", help="recipe YAML path, or 'all' for every bundled recipe")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--data-dir", type=Path, default=Path("."),
                   help="base directory for relative CSV paths in recipes")
    p.add_argument("--recipes-dir", type=Path, default=BUNDLED_RECIPES,
                   help="recipe directory used by 'all'")
    args = parser.parse_args(argv)

    if args.recipe == "all":
        recipe_paths = sorted(args.recipes_dir.glob("*.yaml"))
        if not recipe_paths:
            print(f"no recipes found in {args.recipes_dir}", file=sys.stderr)
            return 1
    else:
        recipe_paths = [Path(args.recipe)]

    failures = 0
    for path in recipe_paths:
        try:
            stats = render(load_recipe(path), args.out, data_dir=args.data_dir)
        except (RecipeError, DataError) as exc:
            print(f"{path.name}: {exc}", file=sys.stderr)
            failures += 1
            continue
        written = ", ".join(str(p) for p in stats.paths)
        note = f" ({stats.rows_failed} failed rows excluded)" if stats.rows_failed else ""
        print(f"{path.name}: wrote {written}{note}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
