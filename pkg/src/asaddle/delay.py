"""Bounded-staleness model.

Asynchrony is modeled, not executed: a single deterministic loop advances the
global clock and evaluates gradients at resolved stale indices. A node's
resolved index never decreases (only the most recent received copy is kept)
and never lags the clock by more than tau_max.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfWindow

__all__ = ["DelaySchedule", "StalenessBuffer", "resolve"]

_DELAY_STREAM = 3
_CHUNK = 4096


@dataclass
class DelaySchedule:
    """Per-node delay process tau_i(t), bounded by tau_max.

    kind "zero": always fresh (synchronous special case).
    kind "fixed": tau_i(t) = node_taus[i] (or tau_max for every node).
    kind "uniform_random": tau_i(t) ~ Uniform{0..tau_max} iid per (i, t),
    drawn from per-node substreams of ``seed`` so draws do not depend on the
    network size or on query order.
    kind "custom_table": explicit (T, n_nodes) table.
    """

    kind: str = "zero"
    tau_max: int = 0
    seed: int = 0
    node_taus: tuple | None = None
    table: np.ndarray | None = None
    _chunks: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in ("zero", "fixed", "uniform_random", "custom_table"):
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if self.tau_max < 0:
            raise ValueError("tau_max must be >= 0")
        if self.kind == "zero":
            self.tau_max = 0
        if self.kind == "fixed" and self.node_taus is not None:
            bad = [v for v in self.node_taus if not 0 <= v <= self.tau_max]
            if bad:
                raise ValueError(f"per-node delays {bad} outside [0, tau_max]")
        if self.kind == "custom_table":
            self.table = np.asarray(self.table, dtype=int)
            if self.table.ndim != 2:
                raise ValueError("custom table must be (T, n_nodes)")
            if self.table.size and (self.table.min() < 0 or self.table.max() > self.tau_max):
                raise ValueError("custom table entries outside [0, tau_max]")

    def tau(self, i: int, t: int) -> int:
        """Raw delay draw for node i at time t (before monotonicity clamping)."""
        if self.kind == "zero":
            return 0
        if self.kind == "fixed":
            return self.tau_max if self.node_taus is None else int(self.node_taus[i])
        if self.kind == "custom_table":
            if t >= self.table.shape[0]:
                raise OutOfWindow(f"custom delay table has {self.table.shape[0]} rows, asked t={t}")
            return int(self.table[t, i])
        block, off = divmod(t, _CHUNK)
        key = (i, block)
        chunk = self._chunks.get(key)
        if chunk is None:
            rng = np.random.default_rng(
                np.random.SeedSequence([_DELAY_STREAM, int(self.seed) & 0xFFFFFFFFFFFFFFFF, i, block])
            )
            chunk = rng.integers(0, self.tau_max + 1, size=_CHUNK)
            self._chunks[key] = chunk
        return int(chunk[off])


def resolve(schedule: DelaySchedule, t: int, i: int, prev: int) -> int:
    """Delayed index [t]_i = max(prev, t - tau_i(t), 0).

    The max with the previously resolved index enforces freshness monotonicity
    (tau_i(t) <= tau_i(t-1) + 1); the floor at 0 clips warm-up reads to the
    initial iterate.
    """
    return max(prev, t - schedule.tau(i, t), 0)


class StalenessBuffer:
    """Per-node ring holding the last ``depth`` values, keyed by time index."""

    def __init__(self, n_nodes: int, depth: int):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.depth = depth
        self._times = [[-1] * depth for _ in range(n_nodes)]
        self._values = [[None] * depth for _ in range(n_nodes)]

    def record(self, t: int, i: int, value) -> None:
        """Store node i's value at time t, evicting the slot's older entry."""
        slot = t % self.depth
        self._times[i][slot] = t
        self._values[i][slot] = value

    def fetch(self, s: int, i: int):
        """Exact value recorded for node i at time s; OutOfWindow if evicted."""
        slot = s % self.depth
        if self._times[i][slot] != s:
            raise OutOfWindow(f"time {s} for node {i} outside retained window")
        return self._values[i][slot]
