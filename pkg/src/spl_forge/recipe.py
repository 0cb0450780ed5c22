"""Construction scripts for physical systems.

One command per line, validated against the construction state as it runs:

    incline <length> <drop_height>
    close_loop
    add_valleys <n>
    valley_to_loop <index>
    iterate <depth>
    merge <file>
    link <file> <node_a> <node_b>
    map catalog=<file> etol=<float> atol=<float>

``merge``/``link`` build the other system from its own recipe file (path
relative to this recipe).  ``map`` runs the catalog search against the
current track and stores the mapped network in the result.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

from .mapping import MappingConstraints, MappingResult, map_physical_to_chemical
from .track import (
    PhysicalSystem,
    add_valleys,
    build_incline,
    close_loop,
    iterate_construction,
    link_systems,
    merge_systems,
    valley_to_loop,
)

__all__ = ["RecipeError", "RecipeResult", "parse_recipe", "execute_recipe", "run_recipe_file"]


class RecipeError(ValueError):
    def __init__(self, source: str, line: int, message: str):
        self.source = source
        self.line = line
        super().__init__(f"{source}:{line}: {message}")


@dataclass(frozen=True)
class Command:
    line: int
    name: str
    args: tuple[str, ...]


@dataclass
class RecipeResult:
    system: PhysicalSystem
    mapping: MappingResult | None = None


def parse_recipe(text: str, source: str = "<recipe>") -> list[Command]:
    known = {
        "incline": 2, "close_loop": 0, "add_valleys": 1, "valley_to_loop": 1,
        "iterate": 1, "merge": 1, "link": 3, "map": None,
    }
    commands: list[Command] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        name, args = parts[0], tuple(parts[1:])
        if name not in known:
            raise RecipeError(source, lineno, f"unknown command {name!r}")
        want = known[name]
        if want is not None and len(args) != want:
            raise RecipeError(
                source, lineno, f"{name} takes {want} argument(s), got {len(args)}"
            )
        commands.append(Command(lineno, name, args))
    if not commands:
        raise RecipeError(source, 1, "empty recipe")
    return commands


def _num(cmd: Command, source: str, idx: int, kind=float):
    try:
        return kind(cmd.args[idx])
    except ValueError:
        raise RecipeError(
            source, cmd.line, f"bad {kind.__name__} argument {cmd.args[idx]!r}"
        ) from None


def execute_recipe(
    commands: list[Command],
    source: str = "<recipe>",
    base_dir: str = ".",
    *,
    friction: float = 0.05,
    gravity: float = 1.0,
    _depth: int = 0,
) -> RecipeResult:
    if _depth > 8:
        raise RecipeError(source, 1, "recipe inclusion too deep (merge/link loop?)")
    sys: PhysicalSystem | None = None
    mapping: MappingResult | None = None

    def need(cmd: Command) -> PhysicalSystem:
        if sys is None:
            raise RecipeError(source, cmd.line, f"{cmd.name} needs a system; start with incline")
        return sys

    def load_sub(cmd: Command, path: str) -> PhysicalSystem:
        full = os.path.join(base_dir, path)
        if not os.path.exists(full):
            raise RecipeError(source, cmd.line, f"no such recipe file {path!r}")
        with open(full) as fh:
            sub = parse_recipe(fh.read(), source=full)
        return execute_recipe(
            sub, source=full, base_dir=os.path.dirname(full) or ".",
            friction=friction, gravity=gravity, _depth=_depth + 1,
        ).system

    for cmd in commands:
        try:
            if cmd.name == "incline":
                if sys is not None:
                    raise RecipeError(source, cmd.line, "incline must be the first command")
                sys = build_incline(
                    _num(cmd, source, 0), _num(cmd, source, 1),
                    friction=friction, gravity=gravity,
                )
            elif cmd.name == "close_loop":
                sys = close_loop(need(cmd))
            elif cmd.name == "add_valleys":
                sys = add_valleys(need(cmd), _num(cmd, source, 0, int))
            elif cmd.name == "valley_to_loop":
                sys = valley_to_loop(need(cmd), _num(cmd, source, 0, int))
            elif cmd.name == "iterate":
                sys = iterate_construction(need(cmd), _num(cmd, source, 0, int))
            elif cmd.name == "merge":
                sys = merge_systems(need(cmd), load_sub(cmd, cmd.args[0]))
            elif cmd.name == "link":
                sys = link_systems(
                    need(cmd), load_sub(cmd, cmd.args[0]),
                    (cmd.args[1], cmd.args[2]),
                )
            elif cmd.name == "map":
                kv = dict(arg.partition("=")[::2] for arg in cmd.args)
                unknown = set(kv) - {"catalog", "etol", "atol"}
                if unknown:
                    raise RecipeError(source, cmd.line, f"unknown map options {sorted(unknown)}")
                if "catalog" not in kv or not kv["catalog"]:
                    raise RecipeError(source, cmd.line, "map needs catalog=<file>")
                from .netfile import parse_catalog

                cat_path = os.path.join(base_dir, kv["catalog"])
                if not os.path.exists(cat_path):
                    raise RecipeError(source, cmd.line, f"no such catalog file {kv['catalog']!r}")
                catalog = parse_catalog(cat_path)
                constraints = MappingConstraints(
                    energy_tolerance=float(kv.get("etol", 0.25)),
                    activation_tolerance=float(kv.get("atol", 0.25)),
                )
                mapping = map_physical_to_chemical(need(cmd), catalog, constraints)
        except RecipeError:
            raise
        except Exception as exc:
            raise RecipeError(source, cmd.line, str(exc)) from exc

    assert sys is not None  # parse_recipe guarantees at least one command
    return RecipeResult(system=sys, mapping=mapping)


def run_recipe_file(path: str, *, friction: float = 0.05, gravity: float = 1.0) -> RecipeResult:
    with open(path) as fh:
        commands = parse_recipe(fh.read(), source=path)
    return execute_recipe(
        commands, source=path, base_dir=os.path.dirname(path) or ".",
        friction=friction, gravity=gravity,
    )
