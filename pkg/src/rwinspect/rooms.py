"""Shipped 10 x 10 m environment suite.

Layouts echo the variety of the simulated rooms used for the coverage
study: an empty room, drum-style circular clutter, offset dividers forming
a snake, a barbell (two chambers joined by a corridor), an L-shaped room,
and a dense room for privacy-audit contrast.  All but ``dense`` stay
traversable at every grid in {2, 1, 0.5} m for a 0.4 m inspector.
"""

from __future__ import annotations

from pathlib import Path

from .geometry import Circle, MapSpec, Rect, save_map

_BACKGROUND = 60.0


def empty_room() -> MapSpec:
    return MapSpec(10.0, 10.0, (), _BACKGROUND)


def drum_room() -> MapSpec:
    drums = (
        Circle(3.0, 3.0, 0.45),
        Circle(7.0, 3.0, 0.45),
        Circle(5.0, 5.0, 0.45),
        Circle(3.0, 7.0, 0.45),
        Circle(7.0, 7.0, 0.45),
    )
    return MapSpec(10.0, 10.0, drums, _BACKGROUND)


def divider_room() -> MapSpec:
    walls = (
        Rect(0.0, 3.3, 7.0, 3.7),
        Rect(3.0, 6.3, 10.0, 6.7),
    )
    return MapSpec(10.0, 10.0, walls, _BACKGROUND)


def barbell_room() -> MapSpec:
    walls = (
        Rect(4.0, 0.0, 6.0, 4.0),
        Rect(4.0, 6.0, 6.0, 10.0),
    )
    return MapSpec(10.0, 10.0, walls, _BACKGROUND)


def lshape_room() -> MapSpec:
    return MapSpec(10.0, 10.0, (Rect(5.0, 0.0, 10.0, 5.0),), _BACKGROUND)


def dense_room() -> MapSpec:
    clutter = (
        Rect(1.5, 1.5, 3.2, 3.0),
        Rect(6.5, 0.8, 8.3, 2.4),
        Rect(4.4, 7.9, 5.6, 10.0),
        Rect(0.0, 5.8, 1.8, 7.2),
        Circle(7.4, 7.4, 0.9),
        Circle(2.6, 8.6, 0.7),
        Circle(5.2, 4.6, 0.8),
        Circle(8.8, 4.8, 0.6),
    )
    return MapSpec(10.0, 10.0, clutter, _BACKGROUND)


BUILDERS = {
    "empty": empty_room,
    "drums": drum_room,
    "dividers": divider_room,
    "barbell": barbell_room,
    "lshape": lshape_room,
    "dense": dense_room,
}

# Rooms kept traversable across the 2 / 1 / 0.5 m grids used for the
# coverage tables.
COVERAGE_SUITE = ("empty", "drums", "dividers", "barbell", "lshape")


def build(name: str) -> MapSpec:
    try:
        return BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown room {name!r}; options: {sorted(BUILDERS)}") from None


def write_suite(directory) -> list[Path]:
    """Write every preset as maps/<name>.json; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, builder in BUILDERS.items():
        path = directory / f"{name}.json"
        save_map(builder(), path)
        paths.append(path)
    return paths
