"""Command-line pipeline: generate -> discover -> train -> evaluate -> explain.

Every command takes the shared --config/--seed/--out flags, derives all
randomness from the single seed through named substreams, and writes a
resolved configuration snapshot next to its outputs. Exit codes are stable:
0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import seeding
from .config import RunConfig, load_config
from .errors import CausalFireError, ConfigError, DataError
from .explain import (
    aggregate_abs_by_lag,
    attributions_to_csv,
    confidence_fn,
    default_feature_groups,
    flatten_sample,
    lag_matrix_to_csv,
    shapley_estimate,
)
from .graphs import (
    adjacency_to_csv,
    causal_adjacency,
    full_adjacency,
    normalize_adjacency,
)
from .metrics import EvalReport, auprc, auroc, curve_csv, pr_curve, roc_curve
from .models import MODEL_KINDS, load_checkpoint, save_checkpoint
from .pcmci import CausalGraph, LinkAssumptions, preprocess_causal_stationarity, run_pcmci
from .synthdata import PRESET_NAMES, generate, load_dataset, make_windows, preset_spec, write_dataset
from .training import predict_confidence, train as train_model

log = logging.getLogger(__name__)

_EXIT_CONFIG = 2
_EXIT_DATA = 3
_EXIT_NUMERIC = 4


def _setup_logging() -> None:
    level = os.environ.get("CAUSAL_GNN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def _fail(exc: CausalFireError) -> None:
    click.echo(f"error: {exc}", err=True)
    if isinstance(exc, ConfigError):
        sys.exit(_EXIT_CONFIG)
    if isinstance(exc, DataError):
        sys.exit(_EXIT_DATA)
    sys.exit(_EXIT_NUMERIC)


def _common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help="TOML or JSON run configuration.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Root random seed.")(fn)
    fn = click.option("--out", "out_dir", type=click.Path(), default=None,
                      help="Output directory.")(fn)
    return fn


def _resolve(config_path, **overrides) -> RunConfig:
    return load_config(config_path, overrides)


@click.group()
def main() -> None:
    """Causal-graph-gated wildfire danger forecasting on synthetic data."""
    _setup_logging()


@main.command(name="generate")
@_common_options
@click.option("--preset", type=click.Choice(PRESET_NAMES), default=None,
              help="Generator preset.")
@click.option("--t-fine", type=int, default=None, help="Fine steps to simulate.")
def generate_cmd(config_path, seed, out_dir, preset, t_fine) -> None:
    """Simulate a dataset with known causal ground truth."""
    try:
        cfg = _resolve(config_path, seed=seed, out_dir=out_dir, preset=preset, t_fine=t_fine)
        out = Path(cfg.out_dir)
        spec = preset_spec(cfg.data.preset)
        gen = generate(spec, cfg.data.t_fine, seeding.stream(cfg.seed, "generate"))
        write_dataset(out, gen, seed=cfg.seed)
        cfg.snapshot(out)
        click.echo(f"wrote {out / 'data.csv'} ({gen.dataset.n_steps} steps)")
        click.echo(f"realized positive rate: {gen.realized_rate:.6f}")
    except CausalFireError as exc:
        _fail(exc)


@main.command()
@_common_options
@click.option("--data", "data_dir", type=click.Path(), required=True,
              help="Dataset directory from `generate`.")
def discover(config_path, seed, out_dir, data_dir) -> None:
    """Run causal discovery and emit the graph as JSON and DOT."""
    try:
        cfg = _resolve(config_path, seed=seed, out_dir=out_dir)
        out = Path(cfg.out_dir)
        gen = load_dataset(Path(data_dir))
        data = preprocess_causal_stationarity(
            gen.dataset.values,
            period=gen.spec.stride,
            names=gen.dataset.names,
            kinds=gen.dataset.kinds,
            season_length=cfg.pcmci.season_length,
        )
        assumptions = LinkAssumptions.mediator_ordering(
            data.kinds, cfg.pcmci.tau_max, target_autolinks=cfg.pcmci.target_autolinks
        )
        graph = run_pcmci(
            data,
            assumptions,
            tau_max=cfg.pcmci.tau_max,
            alpha=cfg.pcmci.alpha,
            alpha_pc=cfg.pcmci.alpha_pc,
            p_max=cfg.pcmci.p_max,
            p_x=cfg.pcmci.p_x,
            correction=cfg.pcmci.correction,
        )
        out.mkdir(parents=True, exist_ok=True)
        (out / "graph.json").write_text(graph.to_json())
        (out / "graph.dot").write_text(graph.to_dot())
        cfg.snapshot(out)
        click.echo("source,lag,target,mci,pvalue")
        for l in sorted(graph.links, key=lambda l: (l.target, l.source, l.lag)):
            click.echo(
                f"{graph.names[l.source]},{l.lag},{graph.names[l.target]},"
                f"{l.mci:+.4f},{l.pvalue:.2e}"
            )
        truth = gen.graph.edge_set()
        if truth:
            pred = graph.edge_set()
            tp = len(pred & truth)
            precision = tp / len(pred) if pred else 1.0
            recall = tp / len(truth)
            click.echo(f"precision vs ground truth: {precision:.3f}")
            click.echo(f"recall vs ground truth: {recall:.3f}")
    except CausalFireError as exc:
        _fail(exc)


def _load_windows(cfg: RunConfig, data_dir: Path):
    gen = load_dataset(data_dir)
    splits = make_windows(
        gen.dataset,
        gen.labels,
        l_local=cfg.data.l_local,
        l_oci=cfg.data.l_oci,
        horizon=cfg.horizon,
        stride=gen.spec.stride,
    )
    return gen, splits


def _model_adjacency(model_kind: str, splits, graph_path: Path | None):
    names = splits.local_names + splits.oci_names
    if model_kind == "gnn_causal":
        if graph_path is None:
            raise ConfigError("model gnn_causal requires --graph")
        graph = CausalGraph.from_json(Path(graph_path).read_text())
        return normalize_adjacency(causal_adjacency(graph)), names
    if model_kind == "gnn_full":
        return normalize_adjacency(full_adjacency(names)), names
    return None, names  # rnn baselines and per-batch correlation graphs


@main.command(name="train")
@_common_options
@click.option("--data", "data_dir", type=click.Path(), required=True)
@click.option("--graph", "graph_path", type=click.Path(), default=None,
              help="Discovered graph JSON (required for gnn_causal).")
@click.option("--model", "model_kind", type=click.Choice(MODEL_KINDS), default=None)
@click.option("--horizon", type=int, default=None)
def train_cmd(config_path, seed, out_dir, data_dir, graph_path, model_kind, horizon) -> None:
    """Train one model kind across the configured seeds."""
    try:
        cfg = _resolve(config_path, seed=seed, out_dir=out_dir, model=model_kind, horizon=horizon)
        out = Path(cfg.out_dir)
        gen, splits = _load_windows(cfg, Path(data_dir))
        adjacency, names = _model_adjacency(cfg.model, splits, graph_path)
        model_cfg = cfg.model_config(len(splits.local_names), len(splits.oci_names))
        out.mkdir(parents=True, exist_ok=True)
        if adjacency is not None:
            (out / "adjacency.csv").write_text(adjacency_to_csv(adjacency))
        for idx, train_seed in enumerate(cfg.train.seeds):
            rng = seeding.stream(cfg.seed, f"train/{cfg.model}/{train_seed}")
            result = train_model(
                cfg.model, splits.train, splits.val, model_cfg, cfg.train, rng,
                adjacency=adjacency, node_names=names,
            )
            save_checkpoint(out / f"ckpt_{cfg.model}_{train_seed}", result.params,
                            model_cfg, seed=train_seed)
            (out / f"history_{cfg.model}_{train_seed}.json").write_text(
                json.dumps(result.history, indent=2, sort_keys=True)
            )
            click.echo(
                f"seed {train_seed}: best val AUPRC {result.best_val_auprc:.4f} "
                f"at epoch {result.best_epoch}"
            )
        cfg.snapshot(out)
    except CausalFireError as exc:
        _fail(exc)


@main.command()
@_common_options
@click.option("--data", "data_dir", type=click.Path(), required=True)
@click.option("--graph", "graph_path", type=click.Path(), default=None)
@click.option("--model", "model_kind", type=click.Choice(MODEL_KINDS), default=None)
@click.option("--checkpoints", "ckpt_dir", type=click.Path(), default=None,
              help="Directory holding ckpt_<model>_<seed> files (default: --out).")
def evaluate(config_path, seed, out_dir, data_dir, graph_path, model_kind, ckpt_dir) -> None:
    """Score checkpoints on the untouched test split."""
    try:
        cfg = _resolve(config_path, seed=seed, out_dir=out_dir, model=model_kind)
        out = Path(cfg.out_dir)
        ckpt_root = Path(ckpt_dir) if ckpt_dir else out
        gen, splits = _load_windows(cfg, Path(data_dir))
        adjacency, names = _model_adjacency(cfg.model, splits, graph_path)
        test = splits.test
        positive_fraction = float(test.y.mean())
        auprcs, aurocs = [], []
        out.mkdir(parents=True, exist_ok=True)
        for train_seed in cfg.train.seeds:
            params, model_cfg, _ = load_checkpoint(ckpt_root / f"ckpt_{cfg.model}_{train_seed}")
            scores = predict_confidence(test, params, model_cfg, adjacency, names)
            auprcs.append(auprc(scores, test.y))
            aurocs.append(auroc(scores, test.y))
            precision, recall, _ = pr_curve(scores, test.y)
            fpr, tpr, _ = roc_curve(scores, test.y)
            (out / f"pr_{cfg.model}_{train_seed}.csv").write_text(
                curve_csv(recall, precision, "recall", "precision")
            )
            (out / f"roc_{cfg.model}_{train_seed}.csv").write_text(
                curve_csv(fpr, tpr, "fpr", "tpr")
            )
        report = EvalReport(
            model=cfg.model,
            horizon=cfg.horizon,
            positive_fraction=positive_fraction,
            seeds=list(cfg.train.seeds),
            auprc_per_seed=auprcs,
            auroc_per_seed=aurocs,
        )
        (out / f"eval_{cfg.model}.json").write_text(report.to_json())
        cfg.snapshot(out)
        click.echo(
            f"{cfg.model}: mean AUPRC {report.mean_auprc:.4f}, "
            f"mean AUROC {report.mean_auroc:.4f} "
            f"(random-baseline AUPRC {positive_fraction:.6f})"
        )
    except CausalFireError as exc:
        _fail(exc)


@main.command()
@_common_options
@click.option("--data", "data_dir", type=click.Path(), required=True)
@click.option("--graph", "graph_path", type=click.Path(), default=None)
@click.option("--checkpoint", "ckpt_path", type=click.Path(), required=True)
def explain(config_path, seed, out_dir, data_dir, graph_path, ckpt_path) -> None:
    """Shapley attributions for every positive test sample."""
    try:
        cfg = _resolve(config_path, seed=seed, out_dir=out_dir)
        out = Path(cfg.out_dir)
        gen, splits = _load_windows(cfg, Path(data_dir))
        params, model_cfg, _ = load_checkpoint(Path(ckpt_path))
        adjacency, names = _model_adjacency(params.kind, splits, graph_path)
        out.mkdir(parents=True, exist_ok=True)
        positives = np.nonzero(splits.test.y == 1)[0]
        if positives.size == 0:
            click.echo("warning: no positive test samples; nothing to explain")
            cfg.snapshot(out)
            return
        groups = default_feature_groups(model_cfg, splits.local_names, splits.oci_names)
        value = confidence_fn(params, model_cfg, adjacency, names)
        rng = seeding.stream(cfg.seed, "explain/background")
        n_bg = min(cfg.n_background, splits.train.size)
        bg_idx = rng.choice(splits.train.size, size=n_bg, replace=False)
        background = np.stack(
            [
                flatten_sample(splits.train.x_local[i], splits.train.x_oci[i])
                for i in bg_idx
            ]
        )
        attributions = []
        for i in positives:
            sample = flatten_sample(splits.test.x_local[i], splits.test.x_oci[i])
            attributions.append(
                shapley_estimate(
                    value, sample, background, groups, cfg.n_permutations,
                    seeding.stream(cfg.seed, f"explain/sample/{i}"),
                )
            )
        (out / "shap_values.csv").write_text(attributions_to_csv(attributions))
        lag_matrix = aggregate_abs_by_lag(
            attributions, splits.oci_names, model_cfg.l_oci, scale_per_variable=True
        )
        (out / "shap_oci_lags.csv").write_text(lag_matrix_to_csv(lag_matrix, splits.oci_names))
        cfg.snapshot(out)
        click.echo(f"explained {len(attributions)} positive test samples")
    except CausalFireError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
