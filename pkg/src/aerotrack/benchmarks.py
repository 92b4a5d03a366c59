"""Builtin benchmark scenarios: sharp turns behind obstacles, relocation turns.

These dict builders are the canonical definitions; the JSON files under
``scenarios/`` are generated from them (``python -m aerotrack.benchmarks``)
so the CLI benchmark can consume a plain directory.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path


def sharp_turn_scenario(speed: float, seed: int = 100) -> dict:
    """Target snakes around two large blocks with two sharp turns.

    The turns happen right at block corners, so a tracker that hugs the
    corners goes blind exactly when the heading changes; the surrounding
    clutter makes blind relocation slow.
    """
    name = f"sharp_turn_{'high' if speed >= 1.2 else 'low'}"
    route = [
        [2.5, 7.2, 0.9],
        [10.8, 7.2, 0.9],    # east along block A's south face
        [10.8, 11.8, 0.9],   # sharp left around A's south-east corner
        [13.2, 11.8, 0.9],   # across the gap
        [13.2, 7.2, 0.9],    # sharp right down between the blocks
        [17.8, 7.2, 0.9],    # east along block B's south face
        [17.8, 11.8, 0.9],   # sharp left around B's south-east corner
        [22.5, 11.8, 0.9],
    ]
    route_len = 8.3 + 4.6 + 2.4 + 4.6 + 4.6 + 4.6 + 4.7
    return {
        "name": name,
        "map": {
            "origin": [0, 0, 0],
            "resolution": 0.1,
            "dims": [260, 180, 25],
            "seed": 5,
            "obstacles": [
                # slalom blocks whose corners the route wraps
                {"type": "box", "min": [7.0, 8.0, 0.0], "max": [10.0, 11.0, 2.5]},
                {"type": "box", "min": [14.0, 8.0, 0.0], "max": [17.0, 11.0, 2.5]},
                # clutter that breaks blind relocation sightlines
                {"type": "box", "min": [11.3, 13.2, 0.0], "max": [13.0, 15.0, 2.5]},
                {"type": "cylinder", "center": [18.5, 13.8], "radius": 0.55},
                {"type": "cylinder", "center": [8.0, 4.6], "radius": 0.5},
                {"type": "cylinder", "center": [15.5, 4.8], "radius": 0.5},
                {"type": "cylinder", "center": [21.0, 7.8], "radius": 0.5},
            ],
        },
        "target": {"waypoints": route, "speed": speed, "smoothing": 1.0},
        "quad_start": [1.0, 7.2, 1.3],
        "duration": round(route_len / speed + 4.0, 1),
        "seed": seed,
        "tracker": {"d_track": 3.0},
        "search": {"v_max": 2.2, "r_goal": 0.5, "node_budget": 1500},
        "opt": {"v_max": 2.2, "a_max": 4.0},
    }


def occlusion_turn_scenario(seed: int = 300) -> dict:
    """Relocation test: the target disappears behind a wall, then doubles back.

    The straight-ahead extrapolation sends the quadrotor to the wrong side of
    the wall; only a camera that keeps sweeping during relocation reacquires
    the target once line of sight returns.
    """
    return {
        "name": "occlusion_turn",
        "map": {
            "origin": [0, 0, 0],
            "resolution": 0.1,
            "dims": [240, 160, 25],
            "obstacles": [
                {"type": "box", "min": [10.0, 4.0, 0.0], "max": [10.4, 10.0, 2.5]},
            ],
        },
        "target": {
            "waypoints": [
                [5.0, 7.0, 0.9],
                [11.2, 7.0, 0.9],   # passes behind the wall
                [11.2, 12.5, 0.9],  # sudden turn north
                [4.0, 12.5, 0.9],   # and doubles back west
            ],
            "speed": 1.2,
            "smoothing": 0.8,
        },
        "quad_start": [2.5, 7.0, 1.3],
        "duration": 20.0,
        "seed": seed,
        "search": {"node_budget": 1500},
    }


ALL = {
    "sharp_turn_low": lambda: sharp_turn_scenario(0.85),
    "sharp_turn_high": lambda: sharp_turn_scenario(1.5),
    "occlusion_turn": occlusion_turn_scenario,
}


def write_all(directory) -> list[Path]:
    out = []
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, build in ALL.items():
        path = directory / f"{name}.json"
        with open(path, "w") as fh:
            json.dump(build(), fh, indent=2)
        out.append(path)
    return out


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else "scenarios"
    for p in write_all(target):
        print(p)
