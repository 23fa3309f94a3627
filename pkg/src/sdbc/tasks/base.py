"""Shared machinery for the benchmark tasks.

Each task advances a whole batch of trials in lockstep (one controller,
many seeded initial conditions), records the raw per-step state, and
derives the per-step behaviour features from the record afterwards, fully
vectorised.  The formal snapshot adapter rebuilds entity groups from the
same record, so the fast path can be checked against the reference
extractor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..formalism import GroupSpec, TaskStateSnapshot, feature_schema
from ..characterisation import characterisation_schema

Controller = Callable[[np.ndarray], np.ndarray]


@dataclass
class TrialBatch:
    """Outcome of simulating one controller over a batch of trials."""

    steps: np.ndarray      # (B,) elapsed steps per trial
    fitness: np.ndarray    # (B,)
    features: np.ndarray   # (T, B, F) per-step features, carry-forward applied
    ts_chars: np.ndarray   # (B, 4) task-specific characterisation per trial
    record: dict | None = None  # per-step state arrays when recording


class Task:
    """Base class; concrete tasks define groups, dynamics and fitness."""

    name: str = ""
    n_inputs: int = 0
    n_outputs: int = 2

    @property
    def max_steps(self) -> int:
        raise NotImplementedError

    def group_specs(self) -> tuple[GroupSpec, ...]:
        raise NotImplementedError

    def excluded_pairs(self) -> frozenset[frozenset[str]]:
        return frozenset()

    def feature_names(self) -> tuple[str, ...]:
        return feature_schema(self.group_specs(), self.excluded_pairs())

    def char_schema(self) -> tuple[str, ...]:
        return characterisation_schema(self.feature_names())

    def simulate(
        self, controller: Controller, seeds: Sequence[int], record: bool = False
    ) -> TrialBatch:
        raise NotImplementedError

    def snapshot(self, rec: dict, trial: int, step: int) -> TaskStateSnapshot:
        """Formal task-state view of one recorded trial step."""
        raise NotImplementedError


def carry_forward(values: np.ndarray, defined: np.ndarray) -> np.ndarray:
    """Replace undefined entries with the last defined value in their column.

    `values` and `defined` are (T, B); entries with no defined predecessor
    become 0.  Undefined slots in `values` may hold anything (NaN included).
    """
    t = values.shape[0]
    idx = np.where(defined, np.arange(t)[:, None], -1)
    idx = np.maximum.accumulate(idx, axis=0)
    padded = np.vstack([np.zeros((1, values.shape[1])), np.where(defined, values, 0.0)])
    return np.take_along_axis(padded, idx + 1, axis=0)


def masked_mean(values: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean of `values` over the last axis where `mask`; also returns the
    defined-ness (any element selected)."""
    count = mask.sum(axis=-1)
    total = (values * mask).sum(axis=-1)
    defined = count > 0
    return total / np.maximum(count, 1), defined


def pairwise_distances(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """All robot-robot distances: inputs (..., N) -> output (..., N, N)."""
    dx = x[..., :, None] - x[..., None, :]
    dy = y[..., :, None] - y[..., None, :]
    return np.sqrt(dx * dx + dy * dy)


def nearest_neighbor_sensor(
    pos: np.ndarray,
    heading: np.ndarray,
    mask: np.ndarray,
    sense_range: float,
    rows: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Range/bearing to each robot's nearest masked peer.

    Out-of-range or absent peers read as range 1, bearing 0.  `rows` is a
    cached arange(B)[:, None] index for the batch axis.
    """
    from ..simulation import normalize_angle

    dist = pairwise_distances(pos[..., 0], pos[..., 1])
    dist = np.where(mask[:, None, :] & mask[:, :, None], dist, np.inf)
    np.einsum("bii->bi", dist)[:] = np.inf
    nearest = dist.argmin(axis=2)
    nd = dist[rows, np.arange(pos.shape[1])[None, :], nearest]
    sensed = np.isfinite(nd) & (nd <= sense_range)
    tx = pos[..., 0][rows, nearest]
    ty = pos[..., 1][rows, nearest]
    bearing = normalize_angle(np.arctan2(ty - pos[..., 1], tx - pos[..., 0]) - heading)
    rng_col = np.where(sensed, nd / sense_range, 1.0)
    bear_col = np.where(sensed, bearing / np.pi, 0.0)
    return rng_col, bear_col


def group_dispersion_series(dist: np.ndarray, member: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-step dispersion over recorded trials.

    `dist` is (T, B, N, N) pair distances, `member` (T, B, N) membership.
    Returns the (T, B) dispersion (ordered-pair sum over (n-1)^2) and its
    defined-ness (n >= 2).
    """
    pair_mask = member[..., :, None] & member[..., None, :]
    n = member.sum(axis=-1)
    total = (dist * pair_mask).sum(axis=(-2, -1))  # diagonal is zero distance
    defined = n >= 2
    denom = np.maximum(n - 1, 1) ** 2
    return total / denom, defined


def random_positions(
    rng: np.random.Generator,
    n: int,
    low: tuple[float, float],
    high: tuple[float, float],
    min_separation: float,
    max_tries: int = 200,
) -> np.ndarray:
    """Uniform non-overlapping points in a box, deterministic per rng state."""
    placed: list[np.ndarray] = []
    for _ in range(n):
        for _ in range(max_tries):
            p = rng.uniform(low, high)
            if all(np.hypot(*(p - q)) >= min_separation for q in placed):
                placed.append(p)
                break
        else:
            placed.append(rng.uniform(low, high))  # crowded box: accept overlap
    return np.array(placed)
