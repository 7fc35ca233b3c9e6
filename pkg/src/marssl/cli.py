"""``marssl fit|predict|evaluate|synth --config <path>``.

Each command reads a JSON config; ``--set key=value`` and the named flags
override it, and ``MARSSL_SEED`` overrides the config seed (flags still win).

Exit codes: 0 ok, 2 bad input or config, 3 fitting failure, 4 dimension
mismatch, 5 misaligned prediction/truth files.
"""
from __future__ import annotations

import functools
import json
import os
import sys
import warnings
from pathlib import Path

import click
import numpy as np

from . import datagen, io
from .data import LabeledSet, UnlabeledSet
from .density import VbConfig
from .dimred import fit_pca
from .errors import DimMismatch, LengthMismatch, MarsslError
from .evaluation import DEFAULT_BINS, ReliabilityDiagram, diagram_from_arrays
from .ssl import METHODS, fit, predict_batch

EXIT_INPUT, EXIT_FIT, EXIT_SHAPE, EXIT_ALIGN = 2, 3, 4, 5


class ConfigError(MarsslError, ValueError):
    pass


class FitError(MarsslError):
    pass


def _fail(code: int, msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, io.MalformedCsv, FileNotFoundError, json.JSONDecodeError) as exc:
            _fail(EXIT_INPUT, str(exc))
        except DimMismatch as exc:
            _fail(EXIT_SHAPE, str(exc))
        except LengthMismatch as exc:
            _fail(EXIT_ALIGN, str(exc))
        except FitError as exc:
            _fail(EXIT_FIT, str(exc.__cause__ or exc))
    return wrapper


def _parse_override(item: str):
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    return key.strip(), val


def load_config(path, sets=(), **flags) -> dict:
    cfg = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    env_seed = os.environ.get("MARSSL_SEED")
    if env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"MARSSL_SEED must be an integer, got {env_seed!r}") from None
    for item in sets:
        k, v = _parse_override(item)
        cfg[k] = v
    for k, v in flags.items():
        if v is not None:
            cfg[k] = v
    return cfg


def _require(cfg: dict, key: str):
    if key not in cfg or cfg[key] in (None, ""):
        raise ConfigError(f"missing required config key {key!r}")
    return cfg[key]


def _num(cfg, key, default, kind=float):
    v = cfg.get(key, default)
    try:
        return kind(v)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r} must be a {kind.__name__}, got {v!r}") from None


def _vb_config(cfg: dict) -> VbConfig:
    try:
        return VbConfig.from_dict(dict(cfg.get("vb", {})))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid vb config: {exc}") from None


def _split_labeled(X, labels):
    lab = np.array([y is not None for y in labels], dtype=bool)
    ys = [y for y in labels if y is not None]
    return X[lab], ys, X[~lab]


def _write_text(path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


config_option = click.option("--config", "config_path", type=click.Path(dir_okay=False),
                             help="JSON config file.")
set_option = click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
                          help="Override a config key (value parsed as JSON when possible).")


@click.group()
def main():
    """Reliable semi-supervised classification when labels are missing at random."""


@main.command("fit")
@config_option
@set_option
@click.option("--labeled", type=str)
@click.option("--unlabeled", type=str)
@click.option("--data", type=str, help="Mixed file; empty label cells are unlabeled.")
@click.option("--method", type=click.Choice(METHODS))
@click.option("--kappa", type=float)
@click.option("--seed", type=int)
@click.option("--pca-dim", "pca_dim", type=int)
@click.option("--model", type=str, help="Output model path.")
@exit_codes
def fit_cmd(config_path, sets, **flags):
    """Fit a model and write it as JSON."""
    cfg = load_config(config_path, sets, **flags)
    method = cfg.get("method", "mar")
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {method!r}")
    out = _require(cfg, "model")
    seed = _num(cfg, "seed", 0, int)
    kappa = _num(cfg, "kappa", 0.0)
    vb = _vb_config(cfg)

    X1_parts, y1, X0_parts = [], [], []
    if cfg.get("data"):
        X, labels = io.read_dataset(cfg["data"])
        a, ys, b = _split_labeled(X, labels)
        X1_parts.append(a)
        y1 += ys
        X0_parts.append(b)
    if cfg.get("labeled"):
        X, labels = io.read_dataset(cfg["labeled"])
        if any(y is None for y in labels):
            raise io.MalformedCsv(f"{cfg['labeled']}: row {labels.index(None) + 2}: missing label")
        X1_parts.append(X)
        y1 += labels
    if cfg.get("unlabeled"):
        if method == "supervised":
            click.echo("warning: method=supervised ignores the unlabeled data", err=True)
        else:
            X, _ = io.read_dataset(cfg["unlabeled"])
            X0_parts.append(X)
    if not X1_parts:
        raise ConfigError("config needs 'labeled' or 'data'")
    dims = {p.shape[1] for p in X1_parts + X0_parts if p.shape[0] > 0}
    if len(dims) > 1:
        raise DimMismatch(f"input files have different feature dimensions: {sorted(dims)}")
    if not dims:
        raise ConfigError("no data rows")
    d = dims.pop()
    X1 = np.vstack([p.reshape(-1, d) for p in X1_parts])
    X0 = np.vstack([p.reshape(-1, d) for p in X0_parts]) if X0_parts else np.zeros((0, d))
    if method == "supervised":
        X0 = np.zeros((0, d))
    if X1.shape[0] == 0:
        raise ConfigError("no labeled rows")
    if method == "mar" and X0.shape[0] == 0:
        raise ConfigError("method=mar needs unlabeled rows")

    pca = None
    if cfg.get("pca_dim") is not None:
        r = _num(cfg, "pca_dim", None, int)
        try:
            pca = fit_pca(np.vstack([X1, X0]), r)
        except ValueError as exc:
            raise ConfigError(f"pca_dim: {exc}") from None
        X1, X0 = pca.transform(X1), pca.transform(X0)

    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            model = fit(method, LabeledSet(X1, np.asarray(y1)), UnlabeledSet(X0), kappa, vb, seed,
                        cfg.get("label_set"))
    except (MarsslError, ValueError, np.linalg.LinAlgError) as exc:
        raise FitError("fitting failed") from exc
    for w in caught:
        click.echo(f"warning: {w.message}", err=True)
    io.save_model(out, model, pca)
    counts = ",".join(f"{y}:{c}" for y, c in zip(model.labels, model.class_counts))
    click.echo(f"method={model.method} D'={model.augmented_count} D''={model.residual_count} "
               f"w={model.w!r} counts={counts}")


def _prediction_header(labels) -> list[str]:
    return ["index", "label", "error_prob", "in_region"] + [f"p_{y}" for y in labels]


@main.command("predict")
@config_option
@set_option
@click.option("--model", type=str)
@click.option("--data", type=str, help="Test dataset CSV.")
@click.option("--out", type=str, help="Output CSV (stdout when omitted).")
@exit_codes
def predict_cmd(config_path, sets, **flags):
    """Write one prediction row per test point."""
    cfg = load_config(config_path, sets, **flags)
    model_path = _require(cfg, "model")
    try:
        model, pca = io.load_model(model_path)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"{model_path}: not a valid model file ({exc})") from None
    X, _ = io.read_dataset(_require(cfg, "data"))
    in_dim = pca.input_dim if pca is not None else model.dim
    lines = [",".join(_prediction_header(model.labels))]
    if X.shape[0] > 0:
        if X.shape[1] != in_dim:
            raise DimMismatch(f"model expects {in_dim} features, test data has {X.shape[1]}")
        Z = pca.transform(X) if pca is not None else X
        pb = predict_batch(model, Z)
        for i in range(len(pb)):
            row = [str(i), str(model.labels[pb.label_index[i]]), io.fmt_float(pb.error_prob[i]),
                   "1" if pb.in_region[i] else "0"]
            row += [io.fmt_float(p) for p in pb.posterior[i]]
            lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if cfg.get("out"):
        _write_text(cfg["out"], text)
    else:
        click.echo(text, nl=False)


def _read_predictions(path):
    header, rows = io.read_table(path)
    if header[:4] != ["index", "label", "error_prob", "in_region"]:
        raise io.MalformedCsv(f"{path}: row 1 (header): not a predictions file")
    labels, q = [], []
    for lineno, r in enumerate(rows, start=2):
        try:
            v = float(r[2])
        except ValueError:
            raise io.MalformedCsv(f"{path}: row {lineno}: bad error_prob") from None
        if not 0.0 <= v <= 1.0:
            raise io.MalformedCsv(f"{path}: row {lineno}: error_prob outside [0, 1]")
        labels.append(r[1])
        q.append(v)
    return labels, np.array(q, dtype=np.float64)


def _read_truth(path):
    header, rows = io.read_table(path)
    if "label" not in header:
        raise io.MalformedCsv(f"{path}: row 1 (header): no 'label' column")
    li = header.index("label")
    labels = [r[li] for r in rows]
    rare = None
    if "rare" in header:
        ri = header.index("rare")
        try:
            rare = np.array([bool(int(r[ri])) for r in rows], dtype=bool)
        except ValueError:
            raise io.MalformedCsv(f"{path}: 'rare' column must hold 0/1") from None
    return labels, rare


def _summary(diag: ReliabilityDiagram) -> dict:
    return {"ece": diag.ece, "accuracy": diag.overall_accuracy, "n": diag.n,
            "bins": diag.rows()}


@main.command("evaluate")
@config_option
@set_option
@click.option("--predictions", type=str, help="Predictions CSV.")
@click.option("--truth", type=str, help="CSV with a 'label' column and optional 'rare' 0/1 column.")
@click.option("--bins", type=int)
@click.option("--out-dir", "out_dir", type=str)
@exit_codes
def evaluate_cmd(config_path, sets, **flags):
    """Reliability diagrams, ECE and accuracy for one or more prediction files."""
    cfg = load_config(config_path, sets, **flags)
    preds = _require(cfg, "predictions")
    if isinstance(preds, str):
        preds = {"": preds}
    elif not isinstance(preds, dict):
        raise ConfigError("'predictions' must be a path or an object of name -> path")
    truth, rare = _read_truth(_require(cfg, "truth"))
    n_bins = _num(cfg, "bins", DEFAULT_BINS, int)
    if n_bins < 1:
        raise ConfigError("bins must be >= 1")
    out_dir = Path(cfg.get("out_dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)

    summary = {"bins": n_bins, "methods": {}}
    for name in sorted(preds):
        labels, q = _read_predictions(preds[name])
        if len(labels) != len(truth):
            raise LengthMismatch(f"{preds[name]} has {len(labels)} rows, truth has {len(truth)}")
        correct = np.array([a == b for a, b in zip(labels, truth)], dtype=bool)
        suffix = f"_{name}" if name else ""
        diag = diagram_from_arrays(q, correct, n_bins)
        _write_text(out_dir / f"reliability{suffix}.csv", diag.to_csv())
        entry = _summary(diag)
        if rare is not None:
            for tag, m in (("rare", rare), ("rest", ~rare)):
                part = diagram_from_arrays(q[m], correct[m], n_bins)
                _write_text(out_dir / f"reliability{suffix}_{tag}.csv", part.to_csv())
                entry[tag] = _summary(part)
        summary["methods"][name or "default"] = entry
    text = io.dumps(summary)
    _write_text(out_dir / "summary.json", text)
    click.echo(text, nl=False)


@main.command("synth")
@config_option
@set_option
@click.option("--scenario", type=click.Choice(["two_cluster", "mar_split"]))
@click.option("--seed", type=int)
@click.option("--out-dir", "out_dir", type=str)
@exit_codes
def synth_cmd(config_path, sets, **flags):
    """Generate a MAR scenario with ground truth."""
    cfg = load_config(config_path, sets, **flags)
    out_dir = Path(_require(cfg, "out_dir"))
    scenario = cfg.get("scenario", "two_cluster")
    seed = _num(cfg, "seed", 0, int)
    if scenario == "two_cluster":
        keys = {f for f in datagen.TwoClusterConfig.__dataclass_fields__} - {"seed"}
        extra = set(cfg) - keys - {"scenario", "seed", "out_dir", "n_test", "test_seed"}
        if extra:
            raise ConfigError(f"unknown two_cluster keys: {sorted(extra)}")
        try:
            tc = datagen.TwoClusterConfig(seed=seed, **{k: cfg[k] for k in keys if k in cfg})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid two_cluster config: {exc}") from None
        n_test = _num(cfg, "n_test", 1000, int)
        out_dir.mkdir(parents=True, exist_ok=True)
        d1, d0, t0 = datagen.gen_two_cluster_mar(tc)
        in_b = datagen.two_cluster_unlabeled_clusters(tc)
        io.write_dataset(out_dir / "labeled.csv", d1.features, d1.labels.tolist())
        io.write_dataset(out_dir / "unlabeled.csv", d0.features)
        io.write_truth(out_dir / "unlabeled_truth.csv", t0.tolist(), in_b)
        if n_test > 0:
            Xt, yt, bt = datagen.two_cluster_test_set(tc, n_test, _num(cfg, "test_seed", seed + 1, int))
            io.write_dataset(out_dir / "test.csv", Xt)
            io.write_truth(out_dir / "test_truth.csv", yt.tolist(), bt)
        click.echo(f"labeled={len(d1)} unlabeled={len(d0)} test={n_test} -> {out_dir}")
    elif scenario == "mar_split":
        X, labels = io.read_dataset(_require(cfg, "input"))
        if any(y is None for y in labels):
            raise io.MalformedCsv(f"{cfg['input']}: row {labels.index(None) + 2}: missing label")
        rare = cfg.get("rare_labels", [])
        if not isinstance(rare, list):
            raise ConfigError("rare_labels must be a list")
        try:
            ms = datagen.MarSplitConfig(
                rare_labels=frozenset(rare),
                n_labeled_total=_num(cfg, "n_labeled_total", 1000, int),
                rare_label_fraction=_num(cfg, "rare_label_fraction", 0.01),
                seed=seed,
            )
            li, ui = datagen.mar_split_indices(np.asarray(labels, dtype=object), ms)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        out_dir.mkdir(parents=True, exist_ok=True)
        rare_set = set(rare)
        io.write_dataset(out_dir / "labeled.csv", X[li], [labels[i] for i in li])
        io.write_dataset(out_dir / "unlabeled.csv", X[ui])
        io.write_truth(out_dir / "unlabeled_truth.csv", [labels[i] for i in ui],
                       [labels[i] in rare_set for i in ui])
        click.echo(f"labeled={len(li)} unlabeled={len(ui)} -> {out_dir}")
    else:
        raise ConfigError(f"unknown scenario {scenario!r}")


if __name__ == "__main__":  # pragma: no cover
    main()
