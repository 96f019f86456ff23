"""Run configuration: one flat JSON file of scalar keys.

Every key has a default; an empty file is a valid config. Dataset sources are
either IDX path pairs or, when left null, the bundled synthetic digit
generator (seeded by `synthetic_seed`).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields

from .data import LabeledDataset, synthetic_digits
from .errors import MalformedFile
from .idx import load_idx
from .metrics import CoverageConfig
from .search import SearchConfig
from .transforms import DEFAULT_BOUNDS

OUT_DIR_ENV = "MRSELECT_OUT"


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "out"
    model_path: str = "model.json"

    # dataset sources; null image path means synthetic digits
    calibration_images: str | None = None
    calibration_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    ood_images: str | None = None
    ood_labels: str | None = None
    synthetic_count: int = 1500
    synthetic_test_count: int = 500
    synthetic_seed: int = 1234
    synthetic_noise: float = 0.08

    # transform parameter bounds, [lo, hi] per kind
    bounds_rotation: tuple = (-10.0, 10.0)
    bounds_translation: tuple = (-2.0, 2.0)
    bounds_scale: tuple = (0.9, 1.1)
    bounds_shear: tuple = (-0.1, 0.1)
    bounds_blur: tuple = (0.0, 1.5)
    bounds_contrast: tuple = (1.0, 2.0)

    # coverage criterion
    criterion: str = "nc"
    nc_threshold: float = 0.25
    dsa_buckets: int = 1000
    dsa_upper: float = 2.0
    dsa_bank_cap: int = 2000

    # evolutionary search
    population: int = 50
    evaluations: int = 200  # inner-run offspring budget (100 is the dsa default)
    steps: int = 5
    uncertain_fraction: float = 0.04
    subset_fraction: float = 0.10
    crossover_rate: float = 0.8
    mutation_rate: float = 0.2
    mutation_change: float = 0.7
    mutation_nullify: float = 0.2
    mutation_reinit: float = 0.1
    chain_budget: int = 5
    chain_depth: int = 3
    gating_subsample: int = 64

    # uncertainty profiling
    grid_step: float = 0.01
    n_samples_search: int = 30
    n_samples_report: int = 100
    tolerance: float = 0.01
    noise_count: int = 300
    fgsm_epsilon: float = 0.2

    # toy trainer
    hidden_sizes: tuple = (32, 16)
    dropout_rates: tuple = (0.2, 0.2)
    epochs: int = 40
    lr: float = 0.5
    batch_size: int = 32

    # training-time augmentation: extra copies of the training set, each image
    # hit with one random transform over the bounds contracted by augment_factor
    augment_copies: int = 0
    augment_factor: float = 0.5
    augment_seed: int = 77

    # baseline
    random_sets: int = 30

    def __post_init__(self):
        if os.environ.get(OUT_DIR_ENV):
            self.out_dir = os.environ[OUT_DIR_ENV]

    def bounds_table(self) -> dict:
        return {
            kind: tuple(getattr(self, f"bounds_{kind}"))
            for kind in DEFAULT_BOUNDS
        }

    def coverage_config(self) -> CoverageConfig:
        return CoverageConfig(
            self.criterion, self.nc_threshold, self.dsa_buckets, self.dsa_upper, self.dsa_bank_cap
        )

    def search_config(self) -> SearchConfig:
        return SearchConfig(
            population=self.population,
            evaluations=self.evaluations,
            steps=self.steps,
            uncertain_fraction=self.uncertain_fraction,
            subset_fraction=self.subset_fraction,
            crossover_rate=self.crossover_rate,
            mutation_rate=self.mutation_rate,
            mutation_mix=(self.mutation_change, self.mutation_nullify, self.mutation_reinit),
            chain_budget=self.chain_budget,
            chain_depth=self.chain_depth,
            gating_subsample=self.gating_subsample,
        )

    def _load_pair(self, images, labels, synthetic_seed, count) -> LabeledDataset:
        if images is not None:
            if labels is None:
                raise MalformedFile(f"image file {images} given without a label file")
            return load_idx(images, labels)
        return synthetic_digits(count, synthetic_seed, self.synthetic_noise)

    def load_calibration(self) -> LabeledDataset:
        return self._load_pair(
            self.calibration_images, self.calibration_labels, self.synthetic_seed, self.synthetic_count
        )

    def load_test(self) -> LabeledDataset:
        return self._load_pair(
            self.test_images, self.test_labels, self.synthetic_seed + 1, self.synthetic_test_count
        )

    def load_ood(self) -> LabeledDataset | None:
        if self.ood_images is None:
            return None
        return self._load_pair(self.ood_images, self.ood_labels, 0, 0)


_FIELD_NAMES = {f.name for f in fields(RunConfig)}


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedFile(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedFile(f"config {path} must be a JSON object")
    unknown = set(doc) - _FIELD_NAMES
    if unknown:
        raise MalformedFile(f"unknown config keys: {sorted(unknown)}")
    try:
        cfg = RunConfig(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in doc.items()})
        # basic range validation (constructor side effects handle the rest)
        cfg.search_config()
        cfg.coverage_config()
    except (TypeError, ValueError) as exc:
        raise MalformedFile(f"bad config value in {path}: {exc}") from exc
    if not (0 < cfg.grid_step <= 1):
        raise MalformedFile("grid_step must lie in (0, 1]")
    if cfg.tolerance < 0 or cfg.n_samples_search < 1 or cfg.n_samples_report < 1:
        raise MalformedFile("bad uncertainty settings")
    if cfg.augment_copies < 0 or cfg.augment_factor <= 0:
        raise MalformedFile("bad augmentation settings")
    return cfg


def save_config(cfg: RunConfig, path) -> None:
    doc = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    doc = {k: (list(v) if isinstance(v, tuple) else v) for k, v in doc.items()}
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
