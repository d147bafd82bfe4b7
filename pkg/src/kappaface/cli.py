"""Command-line driver: ``gen-data``, ``train``, ``eval``, ``weights-report``.

Settings come from built-in defaults, then an optional flat ``key = value``
config file (``--config``), then command-line flags; later sources win.
Every key has a flag spelled with dashes, e.g. ``lr_decay_epochs`` is
``--lr-decay-epochs``.

Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 numerical abort.
"""

import argparse
import csv
import datetime
import os
import sys

import numpy as np

from . import __version__
from .class_stats import MemoryBuffer
from .errors import ConfigError, FormatError, KappaFaceError, NumericalAbort
from .evaluation import evaluate_pairs, write_report, write_roc
from .losses import FAMILIES, MarginLossConfig
from .model import load_checkpoint, save_checkpoint
from .scheduler import SchedulerConfig, compute_psi, weights_from_standardized, write_weights_csv
from .synth import (SyntheticSpec, generate, make_pairs, read_dataset, read_pairs, split_holdout,
                    write_dataset, write_pairs)
from .trainer import TrainConfig, embed, train, write_records_csv

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)


def _opt_float(text):
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return float(text)


# key -> (parser, default, help)
KEYS = {
    # data generation
    "num_classes": (int, 100, "number of classes C"),
    "input_dim": (int, 32, "input dimension D_in"),
    "min_n": (int, 5, "smallest class population"),
    "max_n": (int, 500, "largest class population"),
    "power_exponent": (float, 1.0, "population power-law exponent"),
    "kappa_min": (float, 10.0, "lower end of the log-uniform concentration range"),
    "kappa_max": (float, 300.0, "upper end of the log-uniform concentration range"),
    "noise_mix": (float, 0.5, "fraction of uniform-noise samples in a noisy class"),
    "noisy_class_fraction": (float, 0.1, "fraction of classes that are noisy"),
    "holdout_fraction": (float, 0.2, "per-class holdout fraction"),
    "num_pos": (int, 1000, "positive pairs per pair file"),
    "num_neg": (int, 1000, "negative pairs per pair file"),
    "pair_strategy": (str, "balanced", "balanced | uniform"),
    # training
    "loss": (str, "kappaface", "loss family: " + ", ".join(FAMILIES)),
    "scale": (float, 16.0, "logit scale s"),
    "m0": (float, 0.5, "base margin (radians; cosine margin for cosface)"),
    "temperature": (float, 0.55, "temperature T of the concentration weight"),
    "gamma": (float, 0.5, "population/concentration blend gamma"),
    "psi_fixed": (_opt_float, None, "freeze psi at this value (kappaface only)"),
    "no_population_weight": (_bool, False, "drop the population weight"),
    "max_population": (int, 0, "K for the population weight; 0 means max n_c"),
    "batch_size": (int, 64, "minibatch size"),
    "epochs": (int, 40, "training epochs"),
    "lr": (float, 0.1, "initial learning rate"),
    "lr_decay_epochs": (_int_list, (20, 30), "comma-separated decay epochs"),
    "lr_decay_factor": (float, 0.1, "learning-rate decay factor"),
    "momentum": (float, 0.9, "SGD momentum"),
    "weight_decay": (float, 5e-4, "SGD weight decay"),
    "alpha": (float, 0.3, "memory-buffer EMA momentum"),
    "hidden": (_int_list, (128, 128), "comma-separated hidden widths"),
    "embed_dim": (int, 16, "embedding dimension d"),
    "activation": (str, "relu", "relu | tanh"),
    "eval_every": (int, 0, "evaluate on the holdout pairs every N epochs (0 = never)"),
    "eval_far": (float, 1e-2, "FAR level recorded during training"),
    # global
    "seed": (int, 0, "master seed"),
    "out": (str, ".", "output directory"),
    "no_timestamp": (_bool, False, "omit the timestamp header line"),
    # paths; empty means <out>/<default name>
    "dataset": (str, "", "training dataset (KFD1)"),
    "holdout": (str, "", "holdout dataset (KFD1)"),
    "train_pairs": (str, "", "training pair TSV"),
    "holdout_pairs": (str, "", "holdout pair TSV"),
    "checkpoint": (str, "", "model checkpoint (KMM1)"),
    "metrics": (str, "", "per-epoch metrics CSV"),
    "buffer": (str, "", "memory-buffer snapshot (KMB1)"),
    "weights_csv": (str, "", "per-class weights CSV"),
    "report": (str, "", "verification report"),
    "roc": (str, "", "ROC TSV"),
    "class_stats": (str, "", "CSV of class_id,n_c,kappa_hat|kappa_tilde for weights-report"),
}

DEFAULT_NAMES = {
    "dataset": "dataset.kfd",
    "holdout": "holdout.kfd",
    "train_pairs": "train_pairs.tsv",
    "holdout_pairs": "holdout_pairs.tsv",
    "checkpoint": "model.kmm",
    "metrics": "metrics.csv",
    "buffer": "buffer.kmb",
    "weights_csv": "weights.csv",
    "report": "report.json",
    "roc": "roc.tsv",
}


def parse_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value
    return values


def resolve(cli_values):
    """Merge defaults, config file and flags into a typed settings dict."""
    merged = {k: spec[1] for k, spec in KEYS.items()}
    if cli_values.get("config"):
        merged.update(parse_config_file(cli_values["config"]))
    merged.update({k: v for k, v in cli_values.items() if k in KEYS})
    out = {}
    for key, value in merged.items():
        parser = KEYS[key][0]
        try:
            out[key] = value if value is None else parser(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from exc
    for key, name in DEFAULT_NAMES.items():
        if not out[key]:
            out[key] = os.path.join(out["out"], name)
    return out


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="flat key = value config file")
    for key, (parser, default, help_text) in KEYS.items():
        flag = "--" + key.replace("_", "-")
        if parser is _bool:
            common.add_argument(flag, dest=key, action="store_const", const=True,
                                default=argparse.SUPPRESS, help=help_text)
        else:
            common.add_argument(flag, dest=key, default=argparse.SUPPRESS, help=help_text)
    ap = argparse.ArgumentParser(prog="kappaface", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_text in [("gen-data", "generate a synthetic dataset and pair lists"),
                            ("train", "train an embedding model"),
                            ("eval", "evaluate a checkpoint on holdout pairs"),
                            ("weights-report", "per-class concentration / margin report")]:
        sub.add_parser(name, parents=[common], help=help_text)
    return ap


def _timestamp(cfg):
    if cfg["no_timestamp"]:
        return None
    return "generated " + datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def _require_files(*paths):
    for p in paths:
        if not os.path.isfile(p):
            raise FileNotFoundError(f"missing input file: {p}")


def _ensure_dirs(*paths):
    for p in paths:
        d = os.path.dirname(os.path.abspath(p))
        os.makedirs(d, exist_ok=True)
        if not os.access(d, os.W_OK):
            raise PermissionError(f"output directory not writable: {d}")


def _synthetic_spec(cfg):
    return SyntheticSpec(cfg["num_classes"], cfg["input_dim"], cfg["min_n"], cfg["max_n"],
                         cfg["power_exponent"], cfg["kappa_min"], cfg["kappa_max"], cfg["noise_mix"],
                         cfg["noisy_class_fraction"], cfg["seed"]).validate()


def _train_config(cfg):
    loss = MarginLossConfig(cfg["loss"], cfg["scale"], cfg["m0"])
    return TrainConfig(loss=loss, temperature=cfg["temperature"], gamma=cfg["gamma"],
                       psi_fixed=cfg["psi_fixed"], use_population_weight=not cfg["no_population_weight"],
                       batch_size=cfg["batch_size"], epochs=cfg["epochs"], lr=cfg["lr"],
                       lr_decay_epochs=cfg["lr_decay_epochs"], lr_decay_factor=cfg["lr_decay_factor"],
                       momentum=cfg["momentum"], weight_decay=cfg["weight_decay"], alpha=cfg["alpha"],
                       seed=cfg["seed"], eval_every=cfg["eval_every"], eval_far=cfg["eval_far"],
                       hidden=cfg["hidden"], embed_dim=cfg["embed_dim"], activation=cfg["activation"])


def _scheduler_config(cfg, populations):
    K = cfg["max_population"] or int(np.max(populations))
    return SchedulerConfig(cfg["temperature"], cfg["gamma"], cfg["m0"], K)


def cmd_gen_data(cfg):
    spec = _synthetic_spec(cfg)
    if cfg["pair_strategy"] not in ("balanced", "uniform"):
        raise ConfigError(f"pair_strategy must be balanced or uniform, got {cfg['pair_strategy']!r}")
    _ensure_dirs(cfg["dataset"], cfg["holdout"], cfg["train_pairs"], cfg["holdout_pairs"])
    full = generate(spec)
    train_ds, hold_ds = split_holdout(full, cfg["holdout_fraction"], [cfg["seed"], 1])
    train_pairs = make_pairs(train_ds, cfg["num_pos"], cfg["num_neg"], [cfg["seed"], 2], cfg["pair_strategy"])
    hold_pairs = make_pairs(hold_ds, cfg["num_pos"], cfg["num_neg"], [cfg["seed"], 3], cfg["pair_strategy"])
    write_dataset(train_ds, cfg["dataset"])
    write_dataset(hold_ds, cfg["holdout"])
    write_pairs(train_pairs, cfg["train_pairs"])
    write_pairs(hold_pairs, cfg["holdout_pairs"])
    pops = full.populations
    print(f"classes={full.num_classes} samples={len(full)} train={len(train_ds)} holdout={len(hold_ds)}")
    print(f"populations min={pops.min()} median={int(np.median(pops))} max={pops.max()}")
    k = full.true_kappas
    print(f"kappa min={k.min():.4g} median={np.median(k):.4g} max={k.max():.4g}")
    return EXIT_OK


def cmd_train(cfg):
    tcfg = _train_config(cfg)
    _require_files(cfg["dataset"])
    eval_files = (cfg["holdout"], cfg["holdout_pairs"])
    if tcfg.eval_every:
        _require_files(*eval_files)
    _ensure_dirs(cfg["checkpoint"], cfg["metrics"], cfg["buffer"], cfg["weights_csv"])
    dataset = read_dataset(cfg["dataset"])
    eval_set = (read_dataset(eval_files[0]), read_pairs(eval_files[1])) if tcfg.eval_every else None
    stamp = _timestamp(cfg)
    try:
        result = train(dataset, tcfg, eval_set)
    except NumericalAbort as exc:
        if exc.last_good is not None:
            save_checkpoint(cfg["checkpoint"], *exc.last_good)
        write_records_csv(exc.records, cfg["metrics"], stamp)
        print(f"error: {exc}; last good checkpoint kept at {cfg['checkpoint']}", file=sys.stderr)
        return EXIT_NUMERIC
    save_checkpoint(cfg["checkpoint"], result.mlp, result.classifier)
    write_records_csv(result.records, cfg["metrics"], stamp)
    if result.buffer is not None:
        result.buffer.dump(cfg["buffer"])
    if result.weights is not None:
        write_weights_csv(cfg["weights_csv"], result.weights, dataset.populations, tcfg.loss.m0, stamp)
    last = result.records[-1]
    print(f"epochs={len(result.records)} final_loss={last.mean_loss:.6g}")
    return EXIT_OK


def cmd_eval(cfg):
    _require_files(cfg["checkpoint"], cfg["holdout"], cfg["holdout_pairs"])
    _ensure_dirs(cfg["report"], cfg["roc"])
    mlp, _ = load_checkpoint(cfg["checkpoint"])
    hold = read_dataset(cfg["holdout"])
    pairs = read_pairs(cfg["holdout_pairs"])
    if hold.input_dim != mlp.input_dim:
        raise ConfigError(f"holdout input dim {hold.input_dim} != model input dim {mlp.input_dim}")
    report = evaluate_pairs(embed(mlp, hold.inputs), pairs)
    write_report(report, cfg["report"])
    write_roc(report, cfg["roc"])
    tars = " ".join(f"tar@far={lv:g}:{v:.4f}" for lv, v in sorted(report.tar_at_far.items(), reverse=True))
    print(f"accuracy={report.accuracy:.4f} threshold={report.best_threshold:.4f} {tars}")
    return EXIT_OK


def _read_class_stats(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))
    if not rows:
        raise FormatError("empty class statistics file", path)
    cols = set(rows[0])
    if "n_c" not in cols or not ({"kappa_hat", "kappa_tilde"} & cols):
        raise FormatError("class statistics need n_c and kappa_hat or kappa_tilde columns", path)
    rows.sort(key=lambda r: int(r.get("class_id", 0) or 0))
    n = np.array([int(r["n_c"]) for r in rows])
    if "kappa_hat" in cols and all(r["kappa_hat"] for r in rows):
        return n, np.array([float(r["kappa_hat"]) for r in rows]), None
    return n, None, np.array([float(r["kappa_tilde"]) for r in rows])


def cmd_weights_report(cfg):
    use_pop = not cfg["no_population_weight"]
    if cfg["class_stats"]:
        _require_files(cfg["class_stats"])
        _ensure_dirs(cfg["weights_csv"])
        n, kappa_hat, kappa_tilde = _read_class_stats(cfg["class_stats"])
        sched = _scheduler_config(cfg, n)
        if kappa_hat is not None:
            weights = compute_psi(kappa_hat, n, sched, use_population=use_pop)
        else:
            weights = weights_from_standardized(kappa_tilde, n, sched, use_population=use_pop)
    else:
        _require_files(cfg["buffer"], cfg["dataset"])
        _ensure_dirs(cfg["weights_csv"])
        buffer = MemoryBuffer.load(cfg["buffer"])
        n = read_dataset(cfg["dataset"]).populations
        if n.shape[0] != buffer.num_classes or not np.array_equal(n, buffer.class_counts):
            raise ConfigError("buffer snapshot does not match the dataset's class populations")
        sched = _scheduler_config(cfg, n)
        weights = compute_psi(buffer.epoch_concentrations().kappa_hat, n, sched, use_population=use_pop)
    write_weights_csv(cfg["weights_csv"], weights, n, sched.m0, _timestamp(cfg))
    print(f"classes={len(weights.psi)} psi min={weights.psi.min():.4g} "
          f"mean={weights.psi.mean():.4g} max={weights.psi.max():.4g}")
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "weights-report": cmd_weights_report}


def main(argv=None):
    args = build_parser().parse_args(argv)
    values = vars(args)
    command = values.pop("command")
    try:
        cfg = resolve(values)
        return COMMANDS[command](cfg)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except KappaFaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
