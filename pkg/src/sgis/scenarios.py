"""Ready-made run configs used by the demos and the acceptance suite.

Each function returns a plain config mapping in the CLI's JSON layout, so it can
be fed to :func:`sgis.io.parse_config` or written to disk.
"""
from __future__ import annotations

import copy
from typing import Any, Dict


def default_auction(seed: int = 1) -> Dict[str, Any]:
    """Three-knob auction problem with every default (m=3, c=15, d=25, k=5, u=1)."""
    return {"seed": seed}


def off_grid_optimum(seed: int = 11) -> Dict[str, Any]:
    """One RPM bump at (0.77, 1.23) on [0, 2]^2.

    The c=5 coarse grid steps by 0.5, so the peak sits strictly between grid
    points yet within one sigma (0.25) of the grid point (1, 1).
    """
    return {
        "seed": seed,
        "space": {"names": ["x", "y"], "bounds": [[0.0, 2.0], [0.0, 2.0]]},
        "model": {
            "kind": "bumps",
            "floor": 0.05,
            "price_spread": 0.2,
            "bumps": [{"center": [0.77, 1.23], "height": 0.6, "width": 0.4}],
        },
        "objective": {
            "maximize": "rpm",
            "constraints": [["iy", "<=", 0.0]],
            "deployment": [0.2, 1.8],
        },
        "randomization": {"sigma": [0.25, 0.25], "clip_to_bounds": True},
        "sgis": {"c": 5, "d": 25, "k": 3, "u": 1, "n_sessions": 2000, "n_artificial": 20000},
    }


OFF_GRID_PEAK = (0.77, 1.23)


def two_bumps(seed: int = 5) -> Dict[str, Any]:
    """A tall bump at (1.45, 1.55) and a lower one at (0.5, 0.5).

    The single-start IS baseline begins at (0.35, 0.65), inside the lower
    bump's basin, and randomizes with sigma 0.08.
    """
    return {
        "seed": seed,
        "space": {"names": ["x", "y"], "bounds": [[0.0, 2.0], [0.0, 2.0]]},
        "model": {
            "kind": "bumps",
            "floor": 0.05,
            "price_spread": 0.2,
            "bumps": [
                {"center": [1.45, 1.55], "height": 0.5, "width": 0.3},
                {"center": [0.5, 0.5], "height": 0.35, "width": 0.3},
            ],
        },
        "objective": {
            "maximize": "rpm",
            "constraints": [["iy", "<=", 0.0]],
            "deployment": [1.0, 1.0],
        },
        "randomization": {"sigma": [0.25, 0.25], "clip_to_bounds": True},
        "sgis": {"c": 5, "d": 25, "k": 3, "u": 1, "n_sessions": 2000, "n_artificial": 20000},
        "iterative": {"start": [0.35, 0.65], "sigma": [0.08, 0.08], "u": 10},
    }


SUPERIOR_PEAK = (1.45, 1.55)
INFERIOR_PEAK = (0.5, 0.5)


def with_overrides(config: Dict[str, Any], **sections: Dict[str, Any]) -> Dict[str, Any]:
    """Deep-copy ``config`` and update the named sections key by key."""
    out = copy.deepcopy(config)
    for name, values in sections.items():
        if isinstance(values, dict):
            out.setdefault(name, {}).update(values)
        else:
            out[name] = values
    return out
