"""Certainty profiles, the empirical validity bound, transform gating and
uncertain-sample subset selection.

A profile maps a certainty threshold t to the fraction of a distribution's
inputs whose MC-dropout certainty is >= t. The validity bound blends the
profile of sound data (u) with that of pure-noise data (l) as
0.5 * ((1 - t^3) * u + (1 + t^3) * l); a transformation is valid when its
profile stays above the bound everywhere (up to a small tolerance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .errors import EmptyDataset, GridMismatch, SubsetLargerThanDataset
from .model import MlpModel, certainty_batch
from .transforms import BoundsTable, apply_chain_batch

DEFAULT_GRID_STEP = 0.01


def default_grid(step: float = DEFAULT_GRID_STEP) -> np.ndarray:
    n = int(round(1.0 / step))
    return np.linspace(0.0, 1.0, n + 1)


@dataclass
class CertaintyProfile:
    grid: np.ndarray
    fractions: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        self.fractions = np.asarray(self.fractions, dtype=np.float64)
        if self.grid.shape != self.fractions.shape:
            raise GridMismatch("grid and fractions differ in length")


@dataclass
class ValidityBound:
    grid: np.ndarray
    bound: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        self.bound = np.asarray(self.bound, dtype=np.float64)
        if self.grid.shape != self.bound.shape:
            raise GridMismatch("grid and bound differ in length")


def _as_flat_images(data) -> np.ndarray:
    if isinstance(data, LabeledDataset):
        data = data.images
    arr = np.asarray(data, dtype=np.float64)
    if len(arr) == 0:
        raise EmptyDataset("cannot profile an empty dataset")
    return arr.reshape(len(arr), -1)


def profile(model: MlpModel, data, n_samples: int, seed: int, grid: np.ndarray | None = None) -> CertaintyProfile:
    """Empirical certainty profile of a dataset (or image stack)."""
    X = _as_flat_images(data)
    if len(X) == 0:
        raise EmptyDataset("cannot profile an empty dataset")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    cert = certainty_batch(model, X, n_samples, seed)
    fractions = (cert[None, :] >= grid[:, None]).mean(axis=1)
    return CertaintyProfile(grid, fractions)


def profile_from_certainties(certainties, grid: np.ndarray | None = None) -> CertaintyProfile:
    cert = np.asarray(certainties, dtype=np.float64)
    if len(cert) == 0:
        raise EmptyDataset("no certainty values")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    fractions = (cert[None, :] >= grid[:, None]).mean(axis=1)
    return CertaintyProfile(grid, fractions)


def lower_bound(sound: CertaintyProfile, noise: CertaintyProfile) -> ValidityBound:
    """Cubic-weighted blend of the sound (u) and noise (l) profiles."""
    if not np.array_equal(sound.grid, noise.grid):
        raise GridMismatch("profiles sampled on different grids")
    t = sound.grid
    u, l = sound.fractions, noise.fractions
    bound = 0.5 * ((1.0 - t**3) * u + (1.0 + t**3) * l)
    return ValidityBound(t, bound)


def is_valid(chain_profile: CertaintyProfile, bound: ValidityBound, tolerance: float = 0.01) -> bool:
    """True iff the profile dominates the bound at every grid point (minus tolerance)."""
    if not np.array_equal(chain_profile.grid, bound.grid):
        raise GridMismatch("profile and bound sampled on different grids")
    return bool(np.all(chain_profile.fractions >= bound.bound - tolerance))


def chain_profile(
    model: MlpModel,
    chain,
    subset: LabeledDataset,
    n_samples: int,
    seed: int,
    bounds: BoundsTable | None = None,
    grid: np.ndarray | None = None,
) -> CertaintyProfile:
    transformed = apply_chain_batch(chain, subset.images, bounds)
    return profile(model, transformed, n_samples, seed, grid)


def set_feasibility(
    individual,
    model: MlpModel,
    subset: LabeledDataset,
    bound: ValidityBound,
    n_samples: int,
    seed: int,
    bounds: BoundsTable | None = None,
    tolerance: float = 0.01,
    cache: dict | None = None,
) -> bool:
    """Per-chain gate: an individual is feasible iff every chain's transformed
    profile over the subset passes the bound. All-inactive (identity) chains
    are valid by construction, since they reproduce the sound distribution.

    `cache` memoizes per-chain verdicts by chain key; it is only sound while
    the subset, bound and sampling arguments stay fixed.
    """
    for chain in individual.chains:
        if chain.is_identity():
            continue
        key = chain.key() if cache is not None else None
        if key is not None and key in cache:
            if cache[key]:
                continue
            return False
        prof = chain_profile(model, chain, subset, n_samples, seed, bounds, bound.grid)
        ok = is_valid(prof, bound, tolerance)
        if key is not None:
            cache[key] = ok
        if not ok:
            return False
    return True


def most_uncertain(
    model: MlpModel,
    dataset: LabeledDataset,
    individuals,
    p: float,
    subset_size: int,
    seed: int,
    n_samples: int = 30,
    bounds: BoundsTable | None = None,
) -> np.ndarray:
    """Indices for the next search subset: the ceil(p * subset_size) inputs
    with the lowest minimum-over-chains certainty (ties by index), topped up
    with uniformly random remaining indices.
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError("p must lie in [0, 1]")
    if subset_size > len(dataset):
        raise SubsetLargerThanDataset(f"subset {subset_size} > dataset {len(dataset)}")

    chains = {}
    for ind in individuals:
        for chain in ind.chains:
            chains.setdefault(chain.key(), chain)

    if chains:
        scores = np.full(len(dataset), np.inf)
        for chain in chains.values():
            if chain.is_identity():
                imgs = dataset.flat
            else:
                imgs = apply_chain_batch(chain, dataset.images, bounds).reshape(len(dataset), -1)
            scores = np.minimum(scores, certainty_batch(model, imgs, n_samples, seed))
    else:
        scores = certainty_batch(model, dataset.flat, n_samples, seed)

    n_unc = math.ceil(p * subset_size)
    order = np.argsort(scores, kind="stable")
    chosen = list(order[:n_unc])
    remaining = np.setdiff1d(np.arange(len(dataset)), chosen)
    rng = np.random.default_rng([seed, len(dataset)])
    extra = rng.choice(remaining, size=subset_size - n_unc, replace=False)
    return np.array(chosen + list(extra), dtype=np.int64)


def noise_dataset(shape: tuple[int, int, int], n: int, seed: int) -> LabeledDataset:
    """n images of i.i.d. uniform [0, 1] pixels; labels are placeholders."""
    if n < 1:
        raise EmptyDataset("noise dataset needs n >= 1")
    rng = np.random.default_rng(seed)
    images = rng.random((n, *shape))
    return LabeledDataset(images, np.zeros(n, dtype=np.int64), num_classes=1)
