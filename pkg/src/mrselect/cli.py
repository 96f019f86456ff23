"""Command-line entry point.

Subcommands:
  train     fit the toy classifier on the calibration data and save it
  profile   emit certainty-profile curves (sound/noise/bound/fgsm/[chains]) as CSV
  select    run the full selection loop, write per-step fronts and the chosen set
  baseline  sample random chain sets and evaluate them
  compare   rank statistics of optimized vs random objective CSVs
  evaluate  apply a saved chain set to a dataset and report objectives/kills

Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import MrSelectError
from .metrics import ObjectiveVector, build_reference_bank, evaluate
from .model import (
    fgsm,
    load_model,
    predict_batch,
    save_model,
    train_accuracy,
    train_toy,
)
from .search import (
    Individual,
    SearchContext,
    homrs,
    knee_point,
    load_checkpoint,
    random_sets,
    save_checkpoint,
    ParetoFront,
)
from .stats import compare as stats_compare
from .data import augment
from .transforms import apply_chain_batch, expand_bounds
from .uncertainty import (
    default_grid,
    lower_bound,
    noise_dataset,
    profile,
    set_feasibility,
)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _ensure_out(cfg: RunConfig) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg.out_dir


def _load_dataset(cfg: RunConfig, which: str):
    if which == "calibration":
        return cfg.load_calibration()
    if which == "test":
        return cfg.load_test()
    if which == "ood":
        ood = cfg.load_ood()
        if ood is None:
            raise MrSelectError("no OOD dataset configured")
        return ood
    raise MrSelectError(f"unknown dataset {which!r}")


def _build_context(cfg: RunConfig, model, calibration) -> SearchContext:
    grid = default_grid(cfg.grid_step)
    sound = profile(model, calibration, cfg.n_samples_report, cfg.seed, grid)
    noise = noise_dataset(calibration.image_shape, cfg.noise_count, cfg.seed + 1)
    noise_prof = profile(model, noise, cfg.n_samples_report, cfg.seed, grid)
    bound = lower_bound(sound, noise_prof)
    reference = None
    if cfg.criterion == "dsa":
        reference = build_reference_bank(model, calibration, cfg.dsa_bank_cap, cfg.seed)
    return SearchContext(
        model=model,
        coverage=cfg.coverage_config(),
        bounds=cfg.bounds_table(),
        bound=bound,
        reference=reference,
        n_samples=cfg.n_samples_search,
        tolerance=cfg.tolerance,
        gate_seed=cfg.seed,
    )


def _kill_counts(model, dataset, ind: Individual, bounds):
    probs, _ = predict_batch(model, dataset.flat)
    base = probs.argmax(axis=1)
    killed = np.zeros(len(dataset), dtype=bool)
    total = 0
    for chain in ind.chains:
        flat = apply_chain_batch(chain, dataset.images, bounds).reshape(len(dataset), -1)
        p, _ = predict_batch(model, flat)
        flips = p.argmax(axis=1) != base
        total += int(flips.sum())
        killed |= flips
    return int(killed.sum()), total


def cmd_train(cfg: RunConfig, args) -> int:
    data = cfg.load_calibration()
    if cfg.augment_copies > 0:
        train_bounds = expand_bounds(cfg.bounds_table(), cfg.augment_factor)
        data = augment(data, cfg.augment_copies, train_bounds, cfg.augment_seed)
    model = train_toy(
        list(cfg.hidden_sizes),
        list(cfg.dropout_rates),
        data,
        cfg.epochs,
        cfg.lr,
        cfg.seed,
        cfg.batch_size,
    )
    save_model(model, cfg.model_path)
    acc = train_accuracy(model, data)
    print(f"saved {cfg.model_path} (train accuracy {acc:.4f})")
    return 0


def cmd_profile(cfg: RunConfig, args) -> int:
    out = _ensure_out(cfg)
    model = load_model(cfg.model_path)
    calibration = cfg.load_calibration()
    grid = default_grid(cfg.grid_step)
    n = cfg.n_samples_report

    sound = profile(model, calibration, n, cfg.seed, grid)
    noise = noise_dataset(calibration.image_shape, cfg.noise_count, cfg.seed + 1)
    noise_prof = profile(model, noise, n, cfg.seed, grid)
    bound = lower_bound(sound, noise_prof)

    adv = np.stack(
        [
            fgsm(model, img, int(lbl), cfg.fgsm_epsilon)
            for img, lbl in zip(calibration.images, calibration.labels)
        ]
    )
    fgsm_prof = profile(model, adv, n, cfg.seed, grid)

    header = ["threshold", "sound", "noise", "bound", "fgsm"]
    columns = [sound.fractions, noise_prof.fractions, bound.bound, fgsm_prof.fractions]

    ood = cfg.load_ood()
    if ood is not None:
        header.append("ood")
        columns.append(profile(model, ood, n, cfg.seed, grid).fractions)

    if args.set:
        front = load_checkpoint(args.set)
        bounds = cfg.bounds_table()
        for i, ind in enumerate(front.individuals):
            for j, chain in enumerate(ind.chains):
                imgs = apply_chain_batch(chain, calibration.images, bounds)
                header.append(f"set{i}_chain{j}")
                columns.append(profile(model, imgs, n, cfg.seed, grid).fractions)

    rows = [[grid[k]] + [float(col[k]) for col in columns] for k in range(len(grid))]
    path = os.path.join(out, "profiles.csv")
    _write_csv(path, header, rows)
    print(f"wrote {path}")
    return 0


def _objective_rows(individuals):
    return [
        [
            i,
            ind.objectives.coverage,
            ind.objectives.similarity,
            ind.objectives.kill_ratio,
            bool(ind.objectives.feasible),
        ]
        for i, ind in enumerate(individuals)
    ]


_OBJ_HEADER = ["index", "coverage", "similarity", "kill_ratio", "feasible"]


def cmd_select(cfg: RunConfig, args) -> int:
    out = _ensure_out(cfg)
    model = load_model(cfg.model_path)
    calibration = cfg.load_calibration()
    ctx = _build_context(cfg, model, calibration)
    result = homrs(model, calibration, cfg.search_config(), ctx, cfg.seed, out_dir=out)
    front = result.final_front

    _write_csv(os.path.join(out, "front_objectives.csv"), _OBJ_HEADER, _objective_rows(front.individuals))
    knee = knee_point(front)
    chosen = ParetoFront([front.individuals[knee]], front.feasible_exists)
    save_checkpoint(chosen, os.path.join(out, "chosen.json"))
    if not front.feasible_exists:
        print("warning: no feasible individual found; front contains infeasible sets")
    print(f"wrote {out}/front_final.json ({len(front.individuals)} sets, knee index {knee})")
    return 0


def cmd_baseline(cfg: RunConfig, args) -> int:
    out = _ensure_out(cfg)
    model = load_model(cfg.model_path)
    calibration = cfg.load_calibration()
    ctx = _build_context(cfg, model, calibration)
    rng = np.random.default_rng(cfg.seed)
    sets = random_sets(args.n or cfg.random_sets, cfg.search_config(), rng, ctx.bounds)
    for ind in sets:
        obj = evaluate(model, calibration, ind, ctx.coverage, ctx.bounds, ctx.reference)
        obj.feasible = set_feasibility(
            ind, model, calibration, ctx.bound, ctx.n_samples, ctx.gate_seed, ctx.bounds, ctx.tolerance
        )
        ind.objectives = obj
    save_checkpoint(ParetoFront(sets, True), os.path.join(out, "baseline_sets.json"))
    _write_csv(os.path.join(out, "baseline_objectives.csv"), _OBJ_HEADER, _objective_rows(sets))
    n_bad = sum(1 for ind in sets if not ind.objectives.feasible)
    print(f"wrote {out}/baseline_objectives.csv ({len(sets)} sets, {n_bad} infeasible)")
    return 0


def _read_objectives_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise MrSelectError(f"cannot read {path}: {exc}") from exc
    out = []
    for row in rows:
        out.append(
            ObjectiveVector(
                float(row["coverage"]),
                float(row["similarity"]),
                float(row["kill_ratio"]),
                row["feasible"].strip().lower() == "true",
            )
        )
    if not out:
        raise MrSelectError(f"{path} contains no objective rows")
    return out


def cmd_compare(cfg: RunConfig, args) -> int:
    out = _ensure_out(cfg)
    optimized = _read_objectives_csv(args.optimized)
    randoms = _read_objectives_csv(args.random)
    report = stats_compare(optimized, randoms)
    rows = []
    for name in ("coverage", "similarity", "kill_ratio"):
        s = getattr(report, name)
        rows.append([name, s.mean_a, s.std_a, s.mean_b, s.std_b, s.u, s.p_value, s.delta, s.magnitude])
    path = os.path.join(out, "comparison.csv")
    _write_csv(
        path,
        ["criterion", "opt_mean", "opt_std", "rand_mean", "rand_std", "u", "p_value", "delta", "magnitude"],
        rows,
    )
    print(f"wrote {path} ({report.n_discarded} infeasible random sets discarded)")
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    out = _ensure_out(cfg)
    model = load_model(cfg.model_path)
    dataset = _load_dataset(cfg, args.dataset)
    ctx = _build_context(cfg, model, cfg.load_calibration())
    front = load_checkpoint(args.set)
    rows = []
    for i, ind in enumerate(front.individuals):
        obj = evaluate(model, dataset, ind, ctx.coverage, ctx.bounds, ctx.reference)
        obj.feasible = set_feasibility(
            ind, model, dataset, ctx.bound, ctx.n_samples, ctx.gate_seed, ctx.bounds, ctx.tolerance
        )
        unique, total = _kill_counts(model, dataset, ind, ctx.bounds)
        rows.append(
            [i, obj.coverage, obj.similarity, obj.kill_ratio, bool(obj.feasible), unique, total]
        )
    path = os.path.join(out, f"evaluate_{args.dataset}.csv")
    _write_csv(path, _OBJ_HEADER + ["unique_kills", "total_kills"], rows)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mrselect", description=__doc__)
    parser.add_argument("--config", help="flat JSON config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train", help="train the toy classifier")
    p = sub.add_parser("profile", help="emit certainty-profile CSV")
    p.add_argument("--set", help="chain-set checkpoint to profile per chain")
    sub.add_parser("select", help="run the selection loop")
    p = sub.add_parser("baseline", help="evaluate random chain sets")
    p.add_argument("--n", type=int, help="number of random sets")
    p = sub.add_parser("compare", help="optimized vs random statistics")
    p.add_argument("--optimized", required=True, help="objectives CSV of optimized sets")
    p.add_argument("--random", required=True, help="objectives CSV of random sets")
    p = sub.add_parser("evaluate", help="apply a saved chain set to a dataset")
    p.add_argument("--set", required=True, help="chain-set checkpoint file")
    p.add_argument("--dataset", default="test", choices=["calibration", "test", "ood"])
    return parser


_COMMANDS = {
    "train": cmd_train,
    "profile": cmd_profile,
    "select": cmd_select,
    "baseline": cmd_baseline,
    "compare": cmd_compare,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    if args.config is not None and not os.path.exists(args.config):
        print(f"mrselect: config file not found: {args.config}", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = args.out
        return _COMMANDS[args.command](cfg, args)
    except MrSelectError as exc:
        print(f"mrselect: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
