#!/usr/bin/env python

"""
Train and evaluate multi-label video classifiers on synthetic data.

This code provides the command-line application: ``y8mkit``

EXAMPLES::

    y8mkit generate --out data/
    y8mkit train --config lstm.yml --data data/ --out lstm.ckpt
    y8mkit evaluate --ckpt lstm.ckpt --data data/ --csv lstm.csv
    y8mkit ensemble --inputs lstm.csv,cnn.csv --out merged.csv
    y8mkit sweep --base base.yml --component pooling --candidates pooling --data data/
    y8mkit gradcheck --config lstm.yml

.. rubric:: Application
.. autosummary::

    ~cmd_ensemble
    ~cmd_evaluate
    ~cmd_generate
    ~cmd_gradcheck
    ~cmd_presets
    ~cmd_stats
    ~cmd_sweep
    ~cmd_train
    ~get_options
    ~main
"""

import logging
import os
import pathlib
import sys

import pyRestTable
import yaml

from .config import COMPONENTS
from .config import PRESETS
from .config import ModelConfig
from .config import apply_overrides
from .config import dump_config
from .config import load_config
from .config import load_dataset_spec
from .config import parse_override
from .config import preset
from .config import sweep_base
from .config import sweep_candidates
from .core import ConfigError
from .core import Y8mException
from .data import DatasetSpec
from .data import generate_dataset
from .data import label_stats
from .data import read_split
from .data import write_splits
from .data import write_stats_csv
from .labelgraph import build_cooccurrence
from .metrics import DEFAULT_K
from .metrics import read_predictions
from .trainer import ensemble_diversity
from .trainer import ensemble_files
from .trainer import evaluate
from .trainer import fold_best
from .trainer import gradcheck
from .trainer import greedy_sweep
from .trainer import train

logger = logging.getLogger(__name__)
ERROR_PREFIX = "y8mkit-error"
LOG_LEVEL_ENV = "Y8MKIT_LOG_LEVEL"


def _overrides(args) -> dict:
    """Presets first, then ``--set`` values, in command-line order."""
    overrides = {}
    for name in getattr(args, "preset", None) or []:
        overrides.update(preset(name))
    for text in getattr(args, "set", None) or []:
        path, value = parse_override(text)
        overrides[path] = value
    return overrides


def _model_config(path, args) -> ModelConfig:
    cfg = load_config(path) if path else ModelConfig()
    return apply_overrides(cfg, _overrides(args))


def cmd_generate(args):
    """
    Subcommand ``generate``: write train/validate/test splits.

    PARAMETERS

    args
        *obj* :
        Object returned by ``argparse``
    """
    spec = load_dataset_spec(args.spec) if args.spec else DatasetSpec()
    if args.set:
        raw = spec.to_dict()
        for text in args.set:
            path, value = parse_override(text)
            if path not in raw:
                raise ConfigError(f"Unknown dataset spec key {path!r}")
            raw[path] = value
        spec = DatasetSpec.from_dict(raw)
    splits = generate_dataset(spec)
    out = write_splits(splits, args.out, spec)
    table = pyRestTable.Table()
    table.labels = "split videos".split()
    for name, dataset in splits.items():
        table.addRow((name, len(dataset)))
    print(f"Dataset written to {out}")
    print(table)


def cmd_train(args):
    """
    Subcommand ``train``: train one model and write its checkpoint.

    PARAMETERS

    args
        *obj* :
        Object returned by ``argparse``
    """
    cfg = _model_config(args.config, args)
    if args.merge_validation:
        cfg = apply_overrides(cfg, {"training.merge_validation": True})
    train_set = read_split(args.data, "train")
    validation_set = read_split(args.data, "validate")
    result = train(cfg, train_set, validation_set, out=args.out, metrics_log=args.metrics)
    print(result.model.parameter_table())
    final = result.history[-1]
    print(f"steps={final['step']} train_loss={final['train_loss']} val_gap={final['val_gap']}")
    print(f"checkpoint: {args.out}")


def cmd_evaluate(args):
    """
    Subcommand ``evaluate``: GAP@K of a checkpoint on one split.

    PARAMETERS

    args
        *obj* :
        Object returned by ``argparse``
    """
    dataset = read_split(args.data, args.split)
    result = evaluate(args.ckpt, dataset, args.k, args.csv)
    print(f"GAP@{args.k}: {result.gap:.6f}")


def cmd_ensemble(args):
    """
    Subcommand ``ensemble``: average prediction CSV files.

    PARAMETERS

    args
        *obj* :
        Object returned by ``argparse``
    """
    paths = [p.strip() for p in args.inputs.split(",") if p.strip()]
    weights = None
    if args.weights:
        try:
            weights = [float(w) for w in args.weights.split(",")]
        except ValueError as exc:
            raise ConfigError(f"--weights must be comma-separated numbers: {exc}") from exc
    ensemble_files(paths, args.out, weights, args.k)
    print(f"ensemble of {len(paths)} members written to {args.out}")
    if args.diversity:
        print(ensemble_diversity([read_predictions(p) for p in paths], args.k))


def _load_candidates(text, component):
    """Preset table of ``component`` (when ``text`` names it) or a YAML file ``{name: overrides}``."""
    if text in COMPONENTS:
        return sweep_candidates(text)
    raw = yaml.safe_load(pathlib.Path(text).read_text())
    if not isinstance(raw, dict) or not raw:
        raise ConfigError(f"candidates file {text!r} must map names to overrides")
    return [(str(name), dict(overrides or {})) for name, overrides in raw.items()]


def cmd_sweep(args):
    """
    Subcommand ``sweep``: greedy sweep over one pipeline component.

    PARAMETERS

    args
        *obj* :
        Object returned by ``argparse``
    """
    base = load_config(args.base) if args.base else sweep_base(args.component)
    base = apply_overrides(base, _overrides(args))
    candidates = _load_candidates(args.candidates or args.component, args.component)
    report = greedy_sweep(
        base,
        args.component,
        candidates,
        read_split(args.data, "train"),
        read_split(args.data, "validate"),
        args.k,
    )
    print(f"Sweep: component={args.component!r}, {len(candidates)} candidate(s)")
    print(report.table())
    if args.out:
        pathlib.Path(args.out).write_text(yaml.safe_dump(report.to_dict(), sort_keys=False))
    if args.fold:
        dump_config(fold_best(base, report), args.fold)
        print(f"folded configuration: {args.fold}")


def cmd_gradcheck(args):
    """
    Subcommand ``gradcheck``: compare analytic and numerical gradients.

    Returns the exit status: 0 when every group passes.

    PARAMETERS

    args
        *obj* :
        Object returned by ``argparse``
    """
    cfg = _model_config(args.config, args)
    report = gradcheck(cfg, tolerance=args.tolerance)
    print(report.table())
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def cmd_stats(args):
    """
    Subcommand ``stats``: label counts and co-occurrence as CSV files.

    PARAMETERS

    args
        *obj* :
        Object returned by ``argparse``
    """
    dataset = read_split(args.data, args.split)
    stats = label_stats(dataset)
    for path in write_stats_csv(stats, build_cooccurrence(dataset).counts, args.out):
        print(f"wrote {path}")
    table = pyRestTable.Table()
    table.labels = "class videos".split()
    for label, count in stats.table().items():
        table.addRow((label, count))
    print(table)


def cmd_presets(args):
    """
    Subcommand ``presets``: print the named configurations.

    PARAMETERS

    args
        *obj* :
        Object returned by ``argparse``
    """
    table = pyRestTable.Table()
    table.labels = "component preset overrides".split()
    for component, presets in PRESETS.items():
        if args.component and component != args.component:
            continue
        for name, overrides in presets.items():
            table.addRow((component, name, ", ".join(f"{k}={v}" for k, v in overrides.items())))
    print(table)


def get_options(argv=None):
    """Handle command line arguments."""
    import argparse

    from .__init__ import __version__

    parser = argparse.ArgumentParser(
        prog=os.path.split(sys.argv[0])[-1],
        description=__doc__.strip().splitlines()[0],
    )

    parser.add_argument(
        "-v",
        "--version",
        action="version",
        help="print version number and exit",
        version=__version__,
    )
    parser.add_argument(
        "--log-level",
        default=os.environ.get(LOG_LEVEL_ENV, "WARNING"),
        help=f"logging level (default: ${LOG_LEVEL_ENV} or WARNING)",
    )

    subcommand = parser.add_subparsers(dest="subcommand", title="subcommand")

    def add_overrides(p_sub):
        p_sub.add_argument("--preset", action="append", help="apply a named preset (repeatable)")
        p_sub.add_argument("--set", action="append", help="override one value: path=value (repeatable)")

    p_sub = subcommand.add_parser("generate", help="generate a synthetic dataset")
    p_sub.add_argument("--spec", type=str, help="dataset spec (YAML); default: desk defaults")
    p_sub.add_argument("--out", type=str, required=True, help="output directory")
    p_sub.add_argument("--set", action="append", help="override one spec value: key=value (repeatable)")

    p_sub = subcommand.add_parser("train", help="train one model")
    p_sub.add_argument("--config", type=str, help="model configuration (YAML); default: all defaults")
    p_sub.add_argument("--data", type=str, required=True, help="dataset directory")
    p_sub.add_argument("--out", type=str, required=True, help="checkpoint file")
    p_sub.add_argument("--metrics", type=str, help="metrics log (JSON lines)")
    p_sub.add_argument(
        "--merge-validation",
        action="store_true",
        help="train on the training and validation splits together",
    )
    add_overrides(p_sub)

    p_sub = subcommand.add_parser("evaluate", help="GAP@K of a checkpoint")
    p_sub.add_argument("--ckpt", type=str, required=True, help="checkpoint file")
    p_sub.add_argument("--data", type=str, required=True, help="dataset directory")
    p_sub.add_argument("--split", type=str, default="test", help="split name (default: test)")
    p_sub.add_argument("--k", type=int, default=DEFAULT_K, help=f"predictions per video (default: {DEFAULT_K})")
    p_sub.add_argument("--csv", type=str, help="write predictions to this CSV file")

    p_sub = subcommand.add_parser("ensemble", help="average prediction CSV files")
    p_sub.add_argument("--inputs", type=str, required=True, help="comma-separated CSV files")
    p_sub.add_argument("--out", type=str, required=True, help="merged CSV file")
    p_sub.add_argument("--weights", type=str, help="comma-separated member weights (default: uniform)")
    p_sub.add_argument("--k", type=int, default=DEFAULT_K, help=f"predictions per video (default: {DEFAULT_K})")
    p_sub.add_argument("--diversity", action="store_true", help="print pairwise top-K overlap of the members")

    p_sub = subcommand.add_parser("sweep", help="greedy sweep over one component")
    p_sub.add_argument(
        "--base", type=str, help="base configuration (YAML); default: the component's fixed pipeline"
    )
    p_sub.add_argument("--component", type=str, required=True, choices=COMPONENTS, help="component to sweep")
    p_sub.add_argument(
        "--candidates",
        type=str,
        help="YAML file {name: overrides} or a component name for its presets (default: --component)",
    )
    p_sub.add_argument("--data", type=str, required=True, help="dataset directory")
    p_sub.add_argument("--k", type=int, default=DEFAULT_K, help=f"predictions per video (default: {DEFAULT_K})")
    p_sub.add_argument("--out", type=str, help="write the report as YAML")
    p_sub.add_argument("--fold", type=str, help="write the base configuration with the winner applied")
    add_overrides(p_sub)

    p_sub = subcommand.add_parser("gradcheck", help="check gradients at small dimensions")
    p_sub.add_argument("--config", type=str, help="model configuration (YAML); default: all defaults")
    p_sub.add_argument("--tolerance", type=float, default=1e-4, help="largest relative error (default: 1e-4)")
    add_overrides(p_sub)

    p_sub = subcommand.add_parser("stats", help="label statistics as CSV")
    p_sub.add_argument("--data", type=str, required=True, help="dataset directory")
    p_sub.add_argument("--split", type=str, default="train", help="split name (default: train)")
    p_sub.add_argument("--out", type=str, required=True, help="output directory")

    p_sub = subcommand.add_parser("presets", help="print the named configurations")
    p_sub.add_argument("--component", type=str, choices=COMPONENTS, help="only this component")

    return parser, parser.parse_args(argv)


def main(argv=None):
    """Command-line interface for ``y8mkit`` program."""
    parser, args = get_options(argv)
    logging.basicConfig(level=str(args.log_level).upper())

    commands = {
        "generate": cmd_generate,
        "train": cmd_train,
        "evaluate": cmd_evaluate,
        "ensemble": cmd_ensemble,
        "sweep": cmd_sweep,
        "gradcheck": cmd_gradcheck,
        "stats": cmd_stats,
        "presets": cmd_presets,
    }
    if args.subcommand not in commands:
        parser.print_usage()
        return 0
    try:
        return commands[args.subcommand](args) or 0
    except (Y8mException, OSError) as reason:
        logger.debug("%s failed", args.subcommand, exc_info=True)
        print(f"{ERROR_PREFIX}: {type(reason).__name__}: {reason}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

# -----------------------------------------------------------------------------
# :copyright: (c) 2024-2025, y8mkit developers
#
# Distributed under the terms of the license in the LICENSE.txt file,
# distributed with this software.
# -----------------------------------------------------------------------------
