"""Command line entry point: ``planckotoc run <config>`` or one subcommand per experiment kind."""
from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .io import RaggedGridError, render_heatmap
from .pipelines import KINDS, ConfigError, load_config, run, tomllib

EXIT_CONFIG = 2
EXIT_RUNTIME = 1


def recipe_names() -> list[str]:
    root = resources.files("planckotoc") / "recipes"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def recipe_path(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    ref = resources.files("planckotoc") / "recipes" / f"{name}.toml"
    if ref.is_file():
        return Path(str(ref))
    raise ConfigError("config", f"no such file or recipe: {name} (recipes: {', '.join(recipe_names())})")


def _value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _assignments(items, where: str) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(where, f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = _value(v.strip())
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
    p.add_argument("--threads", type=int, default=None, help="worker threads for per-cell tasks (outputs do not depend on it)")
    scale = p.add_mutually_exclusive_group()
    scale.add_argument("--desk-scale", dest="scale", action="store_const", const="desk",
                       help="desk-scale parameters (default)")
    scale.add_argument("--paper-scale", dest="scale", action="store_const", const="paper",
                       help="apply the config's [paper_scale] overrides")
    p.set_defaults(scale="desk")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planckotoc", description="Planck-cell OTOC experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a TOML configuration or a shipped recipe")
    p.add_argument("config", help="config file or recipe name (fig1, fig2, ...)")
    _common(p)

    for kind in KINDS:
        p = sub.add_parser(kind, help=f"single {kind.replace('_', ' ')} experiment")
        p.add_argument("--model", choices=("kicked_rotor", "lmg", "iho"), default="kicked_rotor")
        p.add_argument("-m", "--model-param", action="append", metavar="KEY=VALUE",
                       help="model parameter, e.g. K=4.7 or L=41 (repeatable)")
        p.add_argument("-p", "--param", action="append", metavar="KEY=VALUE",
                       help="experiment parameter as a TOML value, e.g. steps=70 or "
                            "cells='[[0.35, 0.7]]' (repeatable)")
        _common(p)

    p = sub.add_parser("render", help="render a section CSV as a PNG heatmap")
    p.add_argument("csv")
    p.add_argument("--png", default=None)
    p.add_argument("--block", type=int, default=8)

    sub.add_parser("recipes", help="list shipped recipes")
    return parser


def _config_from_args(args) -> dict:
    model = {"type": args.model, **_assignments(args.model_param, "model")}
    exp = {"kind": args.command, **_assignments(args.param, "experiment[0]")}
    return {"name": args.command, "model": model, "experiment": [exp]}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "recipes":
            print("\n".join(recipe_names()))
            return 0
        if args.command == "render":
            path = render_heatmap(args.csv, args.png, block=args.block)
            print(path)
            return 0
        source = recipe_path(args.config) if args.command == "run" else _config_from_args(args)
        cfg = load_config(source, scale=args.scale, seed=args.seed)
        manifest = run(cfg, args.out, threads=args.threads)
        print(json.dumps({"out": str(args.out), "outputs": [o["path"] for o in manifest.outputs],
                          "wall_clock_seconds": round(manifest.wall_clock, 3)}))
        return 0
    except ConfigError as exc:
        print(exc.as_json(), file=sys.stderr)
        return EXIT_CONFIG
    except RaggedGridError as exc:
        print(json.dumps({"error": "ragged_grid", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surfaced as machine-readable JSON
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
