"""Seeded margin-loss ablation on an imbalanced, partly noisy synthetic set.

Each seed generates a dataset, holds out a per-class fraction, draws
balanced verification pairs on the holdout and trains every variant from
the same initialization. The score is best-threshold pair accuracy.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .evaluation import evaluate_pairs
from .losses import MarginLossConfig
from .synth import SyntheticSpec, generate, make_pairs, split_holdout
from .trainer import TrainConfig, embed, train

__all__ = ["AblationSetup", "DEFAULT_VARIANTS", "run_ablation"]

# name -> (loss family, TrainConfig overrides)
DEFAULT_VARIANTS = {
    "arcface": ("arcface", {}),
    "kappaface": ("kappaface", {}),
    "kappaface_without_ws": ("kappaface", {"use_population_weight": False}),
}


@dataclass(frozen=True)
class AblationSetup:
    data: SyntheticSpec = field(default_factory=lambda: SyntheticSpec(noise_mix=0.5, noisy_class_fraction=0.1))
    train: TrainConfig = field(default_factory=TrainConfig)
    holdout_fraction: float = 0.2
    num_pairs: int = 3000


def run_ablation(seeds, setup=None, variants=None, progress=None):
    """Holdout accuracy for every variant and seed.

    Returns ``{name: array of accuracies, one per seed}``. ``progress``, if
    given, is called as ``progress(seed, name, accuracy)``.
    """
    setup = setup or AblationSetup()
    variants = variants or DEFAULT_VARIANTS
    out = {name: [] for name in variants}
    for seed in seeds:
        full = generate(replace(setup.data, seed=seed))
        tr, ho = split_holdout(full, setup.holdout_fraction, seed + 100)
        pairs = make_pairs(ho, setup.num_pairs, setup.num_pairs, seed + 200)
        for name, (family, overrides) in variants.items():
            loss = MarginLossConfig(family, setup.train.loss.scale, setup.train.loss.m0)
            cfg = replace(setup.train, loss=loss, seed=seed, **overrides)
            result = train(tr, cfg)
            acc = evaluate_pairs(embed(result.mlp, ho.inputs), pairs).accuracy
            out[name].append(acc)
            if progress:
                progress(seed, name, acc)
    return {name: np.array(v) for name, v in out.items()}
