"""Who can hear whom: disc-range contacts, or a hand-written schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def detect_contacts(x: np.ndarray, y: np.ndarray, radio_range: float) -> set[tuple[int, int]]:
    """Pairs ``(a, b)`` with ``a < b`` and distance <= ``radio_range``."""
    n = len(x)
    if n < 2:
        return set()
    iu, ju = _pair_index(n)
    dx = x[iu] - x[ju]
    dy = y[iu] - y[ju]
    hit = np.flatnonzero(dx * dx + dy * dy <= radio_range * radio_range)
    return {(int(iu[k]), int(ju[k])) for k in hit}


_PAIR_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _pair_index(n: int):
    if n not in _PAIR_CACHE:
        _PAIR_CACHE[n] = np.triu_indices(n, k=1)
    return _PAIR_CACHE[n]


class ContactTracker:
    """Incremental :func:`detect_contacts` with identical results.

    Every ``rescan`` steps all pairs are checked and those within
    ``radio_range + 2 * v_max * dt * rescan`` are kept as candidates; no other
    pair can close to within range before the next rescan, so in between only
    candidates are tested.
    """

    def __init__(self, radio_range: float, v_max: float, dt: float, rescan: int = 100):
        self.r2 = radio_range * radio_range
        self.rescan = max(1, rescan)
        reach = radio_range + 2.0 * v_max * dt * self.rescan
        self.reach2 = reach * reach
        self._age = self.rescan
        self._ci = self._cj = None

    def update(self, x: np.ndarray, y: np.ndarray) -> set[tuple[int, int]]:
        n = len(x)
        if n < 2:
            return set()
        if self._age >= self.rescan:
            iu, ju = _pair_index(n)
            dx = x[iu] - x[ju]
            dy = y[iu] - y[ju]
            keep = np.flatnonzero(dx * dx + dy * dy <= self.reach2)
            self._ci, self._cj = iu[keep], ju[keep]
            self._age = 0
        self._age += 1
        ci, cj = self._ci, self._cj
        if not len(ci):
            return set()
        dx = x[ci] - x[cj]
        dy = y[ci] - y[cj]
        hit = np.flatnonzero(dx * dx + dy * dy <= self.r2)
        return {(int(ci[k]), int(cj[k])) for k in hit}


def symmetric(contacts: set[tuple[int, int]]) -> set[tuple[int, int]]:
    """Expand ``a < b`` pairs to both orientations."""
    return contacts | {(b, a) for a, b in contacts}


@dataclass(frozen=True)
class ScriptedContact:
    a: int
    b: int
    start: float
    end: float


class ContactScript:
    """Contacts that exist exactly during ``[start, end]`` (inclusive, seconds)."""

    def __init__(self, contacts):
        self.contacts = [ScriptedContact(*c) if not isinstance(c, ScriptedContact) else c
                         for c in contacts]

    def at(self, t: float, dt: float) -> set[tuple[int, int]]:
        eps = dt * 1e-6
        return {
            (min(c.a, c.b), max(c.a, c.b))
            for c in self.contacts
            if c.start - eps <= t <= c.end + eps
        }
