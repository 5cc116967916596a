"""Bundled feeders."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .network import NetworkModel, parse_network

BUNDLED = {
    "ieee37_test1": "ieee37_test1.json",
    "ieee37_test2": "ieee37_test2.json",
    "baran33": "baran33.json",
    "das70": "das70.json",
    "five_node": "five_node.json",
}

# lines carrying the larger weight in the weighted 33-node run
BARAN33_HEAVY_LINES = ((6, 7), (8, 9), (9, 10), (13, 14), (31, 32), (7, 20), (8, 14), (11, 21), (17, 32), (24, 28))


def path(name: str) -> Path:
    if name not in BUNDLED:
        raise KeyError(f"unknown dataset {name!r}; choose from {sorted(BUNDLED)}")
    return Path(str(resources.files("gridreconf") / "data" / BUNDLED[name]))


def load(name: str) -> NetworkModel:
    return parse_network(path(name))


def baran33_weights(heavy: float = 2e3, light: float = 2e2) -> dict:
    """Per-line lambda overrides: ``heavy`` on the ten listed lines, ``light`` elsewhere."""
    model = load("baran33")
    return {l.key: (heavy if l.key in BARAN33_HEAVY_LINES else light) for l in model.lines}
