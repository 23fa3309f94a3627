"""From per-step feature samples to a comparable behaviour characterisation.

The pipeline: per-step features are aggregated into a raw characterisation
(mean block, final block, normalised duration), the current population's
raw characterisations define z-score coefficients, feature weights are the
mutual information between each component and fitness plus a floor, and
behaviour distance is the Euclidean distance between transformed vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .formalism import FeatureSnapshot


@dataclass(frozen=True)
class RawCharacterisation:
    """Fixed-length behaviour vector: [means, finals, duration], length 2F+1."""

    values: np.ndarray
    schema: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(self.schema):
            raise ValueError("characterisation values and schema lengths differ")


@dataclass(frozen=True)
class StandardisationCoefficients:
    mu: np.ndarray
    sigma: np.ndarray

    def __len__(self) -> int:
        return len(self.mu)


@dataclass(frozen=True)
class FeatureWeights:
    """Per-component weights, each the MI estimate plus the floor `delta`."""

    weights: np.ndarray
    delta: float = 0.25


def characterisation_schema(feature_names: Sequence[str]) -> tuple[str, ...]:
    """Aggregated component names: every feature as (M) then (F), plus duration."""
    means = tuple(f"{n} (M)" for n in feature_names)
    finals = tuple(f"{n} (F)" for n in feature_names)
    return means + finals + ("simulation length",)


def aggregate(
    samples: Sequence[FeatureSnapshot], steps_elapsed: int, max_steps: int
) -> RawCharacterisation:
    """Collapse a trial's feature samples into one raw characterisation.

    The vector is the per-feature mean over all samples, then the final
    sample, then the normalised trial duration.
    """
    if not samples:
        raise ValueError("cannot aggregate zero feature samples")
    if not (1 <= steps_elapsed <= max_steps):
        raise ValueError("steps_elapsed must be in [1, max_steps]")
    schema = samples[0].schema
    for s in samples[1:]:
        if s.schema != schema:
            raise ValueError("feature samples disagree on schema")
    mat = np.array([s.values for s in samples], dtype=float)
    values = np.concatenate([mat.mean(axis=0), mat[-1], [steps_elapsed / max_steps]])
    return RawCharacterisation(values=values, schema=characterisation_schema(schema))


def aggregate_batch(
    features: np.ndarray, steps: np.ndarray, max_steps: int
) -> np.ndarray:
    """Vectorised `aggregate` over a batch of trials.

    `features` has shape (T, B, F) with per-step samples, `steps` (B,) gives
    each trial's elapsed step count; rows beyond a trial's own length are
    ignored.  Returns (B, 2F+1).
    """
    t_axis = np.arange(features.shape[0])[:, None]
    valid = t_axis < steps[None, :]
    means = (features * valid[:, :, None]).sum(axis=0) / steps[:, None]
    finals = features[steps - 1, np.arange(features.shape[1])]
    duration = steps[:, None] / max_steps
    return np.concatenate([means, finals, duration], axis=1)


def aggregate_trials(
    per_trial: Sequence[RawCharacterisation], per_trial_fitness: Sequence[float]
) -> tuple[RawCharacterisation, float]:
    """Element-wise mean characterisation and mean fitness over trials."""
    if not per_trial:
        raise ValueError("cannot aggregate zero trials")
    if len(per_trial) != len(per_trial_fitness):
        raise ValueError("trial characterisations and fitnesses differ in length")
    schema = per_trial[0].schema
    for c in per_trial[1:]:
        if c.schema != schema:
            raise ValueError("trial characterisations disagree on schema")
    mean = np.mean([c.values for c in per_trial], axis=0)
    return RawCharacterisation(values=mean, schema=schema), float(np.mean(per_trial_fitness))


def _as_matrix(population: Sequence[RawCharacterisation] | np.ndarray) -> np.ndarray:
    if isinstance(population, np.ndarray):
        return population
    return np.array([c.values for c in population], dtype=float)


def compute_standardisation(
    population: Sequence[RawCharacterisation] | np.ndarray,
) -> StandardisationCoefficients:
    """Per-component population mean and (population) standard deviation."""
    mat = _as_matrix(population)
    if mat.shape[0] == 0:
        raise ValueError("cannot standardise an empty population")
    return StandardisationCoefficients(mu=mat.mean(axis=0), sigma=mat.std(axis=0))


def apply_standardisation(
    b: RawCharacterisation | np.ndarray, c: StandardisationCoefficients
) -> np.ndarray:
    """Z-score one vector; components with zero spread map to 0."""
    v = b.values if isinstance(b, RawCharacterisation) else np.asarray(b, dtype=float)
    if v.shape[-1] != len(c):
        raise ValueError("characterisation and coefficient lengths differ")
    sigma = np.where(c.sigma > 0.0, c.sigma, 1.0)
    return np.where(c.sigma > 0.0, (v - c.mu) / sigma, 0.0)


def _quantile_bin(x: np.ndarray, n_bins: int) -> tuple[np.ndarray, int]:
    """Equal-frequency binning with edges at the q/n_bins quantiles;
    duplicate edges collapse, so low-cardinality data gets correspondingly
    few bins.  A value sitting exactly on an edge belongs to the upper bin."""
    edges = np.unique(np.quantile(x, np.arange(1, n_bins) / n_bins))
    return np.searchsorted(edges, x, side="right"), len(edges) + 1


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log2(p)).sum())


def mi_bin_count(n: int, bins_min: int = 4, bins_max: int = 16) -> int:
    return int(min(max(math.ceil(math.sqrt(n)), bins_min), bins_max))


def estimate_mutual_information(
    feature: Sequence[float] | np.ndarray,
    fitness: Sequence[float] | np.ndarray,
    bins_min: int = 4,
    bins_max: int = 16,
) -> float:
    """Plug-in mutual information estimate in bits.

    Both variables are discretised with equal-frequency bins (sqrt-of-n
    count, clamped), the joint histogram gives H(X) + H(Y) - H(X, Y), and
    the result is clamped at 0 from below.
    """
    x = np.asarray(feature, dtype=float)
    y = np.asarray(fitness, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("feature and fitness must be equal-length 1-d sequences")
    n = len(x)
    if n < 2:
        raise ValueError("mutual information needs at least 2 samples")
    b = mi_bin_count(n, bins_min, bins_max)
    bx, kx = _quantile_bin(x, b)
    by, ky = _quantile_bin(y, b)
    joint = np.bincount(bx * ky + by, minlength=kx * ky)
    hx = _entropy(np.bincount(bx, minlength=kx), n)
    hy = _entropy(np.bincount(by, minlength=ky), n)
    hxy = _entropy(joint, n)
    return max(0.0, hx + hy - hxy)


def compute_weights(
    population: Sequence[RawCharacterisation] | np.ndarray,
    fitnesses: Sequence[float],
    delta: float = 0.25,
    bins_min: int = 4,
    bins_max: int = 16,
) -> FeatureWeights:
    """Per-component weight: `delta` plus the component's MI with fitness."""
    mat = _as_matrix(population)
    if mat.shape[0] == 0:
        raise ValueError("cannot weight an empty population")
    fit = np.asarray(fitnesses, dtype=float)
    if mat.shape[0] != len(fit):
        raise ValueError("population and fitnesses differ in length")
    mi = np.array(
        [
            estimate_mutual_information(mat[:, k], fit, bins_min, bins_max)
            for k in range(mat.shape[1])
        ]
    )
    return FeatureWeights(weights=delta + mi, delta=delta)


def apply_weights(b: np.ndarray, w: FeatureWeights) -> np.ndarray:
    """Component-wise product of a transformed characterisation and weights."""
    v = np.asarray(b, dtype=float)
    if v.shape[-1] != len(w.weights):
        raise ValueError("characterisation and weight lengths differ")
    return v * w.weights


def behaviour_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two (transformed) characterisations."""
    av = np.asarray(a, dtype=float)
    bv = np.asarray(b, dtype=float)
    if av.shape != bv.shape:
        raise ValueError("characterisation lengths differ")
    return float(np.linalg.norm(av - bv))
