"""Random-waypoint movement for every node at once.

Each node walks in a straight line toward its waypoint at its leg speed. A
node that reached its waypoint on the previous step stays put for one step
and draws a new waypoint (uniform over the park) and a new speed (uniform in
``[v_min, v_max]``). Draws are made in ascending node order so the scalar
:func:`move_point` replays the vectorised path exactly.
"""

from __future__ import annotations

import random

import numpy as np


def move_point(x, y, wx, wy, speed, dt, rng, width, height, v_min, v_max):
    """Advance one node by one step; returns ``(x, y, wx, wy, speed)``."""
    dx, dy = wx - x, wy - y
    dist = float(np.hypot(dx, dy))
    if dist == 0.0:
        return x, y, rng.uniform(0.0, width), rng.uniform(0.0, height), rng.uniform(v_min, v_max)
    travel = speed * dt
    if dist <= travel:
        return wx, wy, wx, wy, speed
    frac = travel / dist
    nx = min(max(x + dx * frac, 0.0), width)
    ny = min(max(y + dy * frac, 0.0), height)
    return nx, ny, wx, wy, speed


class RandomWaypoint:
    def __init__(
        self,
        n: int,
        width: float,
        height: float,
        v_min: float,
        v_max: float,
        rng: random.Random,
        fixed: set[int] = frozenset(),
        fixed_at: tuple[float, float] | None = None,
    ):
        self.width, self.height = float(width), float(height)
        self.v_min, self.v_max = float(v_min), float(v_max)
        self.rng = rng
        self.x = np.empty(n)
        self.y = np.empty(n)
        self.wx = np.empty(n)
        self.wy = np.empty(n)
        self.speed = np.empty(n)
        for i in range(n):
            self.x[i] = rng.uniform(0.0, width)
            self.y[i] = rng.uniform(0.0, height)
            self.wx[i] = rng.uniform(0.0, width)
            self.wy[i] = rng.uniform(0.0, height)
            self.speed[i] = rng.uniform(v_min, v_max)
        self.mobile = np.ones(n, dtype=bool)
        for i in fixed:
            self.mobile[i] = False
            px, py = fixed_at if fixed_at is not None else (width / 2, height / 2)
            self.x[i] = self.wx[i] = px
            self.y[i] = self.wy[i] = py
            self.speed[i] = 0.0
        self._all_mobile = bool(self.mobile.all())

    def __len__(self) -> int:
        return len(self.x)

    def position(self, i: int) -> tuple[float, float]:
        return float(self.x[i]), float(self.y[i])

    def step(self, dt: float) -> None:
        x, y, wx, wy = self.x, self.y, self.wx, self.wy
        dx = wx - x
        dy = wy - y
        dist = np.hypot(dx, dy)
        travel = self.speed * dt
        arrive = dist <= travel
        if not self._all_mobile:
            arrive &= self.mobile
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = travel / dist
        frac[arrive] = 0.0
        if not self._all_mobile:
            frac[~self.mobile] = 0.0
        nx = x + dx * frac
        ny = y + dy * frac
        np.minimum(np.maximum(nx, 0.0, out=nx), self.width, out=nx)
        np.minimum(np.maximum(ny, 0.0, out=ny), self.height, out=ny)
        if arrive.any():
            # land on the waypoint; a node already there redraws its next leg
            at = arrive & (dist == 0.0)
            nx[arrive] = wx[arrive]
            ny[arrive] = wy[arrive]
            rng = self.rng
            for i in np.flatnonzero(at):
                self.wx[i] = rng.uniform(0.0, self.width)
                self.wy[i] = rng.uniform(0.0, self.height)
                self.speed[i] = rng.uniform(self.v_min, self.v_max)
        self.x, self.y = nx, ny
