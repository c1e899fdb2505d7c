"""Multi-seed runs and the rho sweep over random-tree layouts."""

import statistics
from dataclasses import replace

import numpy as np

from ..trees import build_random, depth_stats
from .train import TrainConfig, evaluate, train


def run_seeds(dataset, enc_config, head_config=None, config=None, seeds=(0, 1, 2, 3, 4), split="test"):
    """Train once per seed; returns per-seed metrics plus their mean."""
    config = config or TrainConfig()
    values = []
    for seed in seeds:
        result = train(dataset, enc_config, head_config, replace(config, seed=seed))
        values.append(evaluate(result.model, dataset.split(split), config.eval_batch_size))
    return {"seeds": list(seeds), "values": values, "mean": sum(values) / len(values)}


def mean_depth(lengths, rho, seed):
    """Mean leaf depth of one ``rho``-random tree per sentence length."""
    rng = np.random.default_rng(seed)
    depths = [depth_stats(build_random(int(n), rho, rng)).mean_leaf_depth for n in lengths]
    return sum(depths) / len(depths)


def rho_sweep(dataset, enc_config, grid, head_config=None, config=None, seeds=(0, 1, 2, 3, 4),
              split="test", on_run=None):
    """One row per rho: mean leaf depth on ``split`` and the metric over seeds."""
    config = config or TrainConfig()
    if any(not 0.0 <= r <= 1.0 for r in grid):
        raise ValueError("rho grid must lie within [0, 1]")
    lengths = [len(ex.tokens) for ex in dataset.split(split)]
    rows = []
    for rho in grid:
        cfg = replace(enc_config, layout="random", rho=float(rho))
        values = []
        for seed in seeds:
            result = train(dataset, cfg, head_config, replace(config, seed=seed))
            values.append(evaluate(result.model, dataset.split(split), config.eval_batch_size))
            if on_run is not None:
                on_run(rho, seed, values[-1])
        rows.append({
            "rho": float(rho),
            "mean_depth": mean_depth(lengths, rho, config.seed),
            "mean_metric": sum(values) / len(values),
            "median_metric": statistics.median(values),
            "values": values,
        })
    return rows
