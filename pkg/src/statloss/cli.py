"""``statloss`` command line: synth, train, gradcheck and eval.

Settings come from an optional JSON config with flat keys; flags override it.
Exit status: 0 success, 1 tolerance failure, 2 usage or config error,
3 I/O or parse error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .benchmark import embedding_stats
from .data import (
    Dataset,
    GaussianSpec,
    benchmark_specs,
    load_csv,
    stratified_split,
    synth_gaussians,
    write_csv,
)
from .errors import CheckpointError, ConfigError, ParseError, StatLossError
from .evaluation import confusion, format_report, mcnemar, metrics, report_dict, write_report
from .gradcheck import run_gradcheck
from .model import TrainConfig, fit, load_checkpoint, predict, save_checkpoint
from .stat_loss import LossConfig

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

# key -> (type, default); keys mirror the flag names with dashes as underscores
CONFIG_KEYS = {
    "seed": (int, 0),
    "out": (str, "."),
    "lambda": (float, 0.01),
    "beta": (float, 1.0),
    "delta": (float, 10.0),
    "lr": (float, 0.001),
    "iterations": (int, 2000),
    "batch_size": (int, 84),
    "ridge_eps": (float, None),
    "grad_mode": (str, "paper"),
    "hinge": (bool, False),
    "hidden_dims": (list, [32, 16]),
    "init_std": (str, "0.01"),
    "train": (str, None),
    "test": (str, None),
    "data": (str, None),
    "split": (float, None),
    "checkpoint": (str, None),
    "baseline": (str, None),
    "classes": (list, None),
    "preset": (str, None),
    "train_per_class": (float, 0.5),
    "batches": (int, 50),
    "tolerance": (float, 1e-4),
}


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = sorted(set(doc) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    return doc


def _coerce(key: str, value):
    kind = CONFIG_KEYS[key][0]
    if value is None:
        return None
    if kind is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key} must be true or false, got {value!r}")
    if kind is list:
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be a list, got {value!r}")
        return value
    if kind is str and key == "init_std":
        return str(value)
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot read {value!r} as {kind.__name__}") from exc


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then config file, then explicit flags."""
    cfg = {k: d for k, (_, d) in CONFIG_KEYS.items()}
    if args.config:
        cfg.update(load_config(args.config))
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return {k: _coerce(k, v) for k, v in cfg.items()}


def _init_std(text: str):
    if text == "fan_in":
        return text
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"init_std must be a number or 'fan_in', got {text!r}") from None


def loss_config(cfg: dict) -> LossConfig:
    return LossConfig(lam=cfg["lambda"], delta=cfg["delta"], ridge_eps=cfg["ridge_eps"],
                      grad_mode=cfg["grad_mode"], hinge=cfg["hinge"])


def train_config(cfg: dict) -> TrainConfig:
    try:
        hidden = tuple(int(h) for h in cfg["hidden_dims"])
    except (TypeError, ValueError):
        raise ConfigError(f"hidden_dims must be integers, got {cfg['hidden_dims']!r}") from None
    return TrainConfig(beta=cfg["beta"], lr=cfg["lr"], iterations=cfg["iterations"],
                       batch_size=cfg["batch_size"], seed=cfg["seed"], loss_cfg=loss_config(cfg),
                       hidden_dims=hidden, init_std=_init_std(cfg["init_std"]))


def _split_arg(value: float):
    return int(value) if float(value).is_integer() and value >= 1 else float(value)


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _specs(cfg: dict) -> list[GaussianSpec]:
    if cfg["preset"] == "benchmark":
        return benchmark_specs()
    if cfg["preset"] is not None:
        raise ConfigError(f"unknown preset {cfg['preset']!r}; the only preset is 'benchmark'")
    if not cfg["classes"]:
        raise ConfigError("synth needs 'classes' in the config or --preset benchmark")
    specs = []
    for i, c in enumerate(cfg["classes"]):
        try:
            specs.append(GaussianSpec(np.asarray(c["mean"], float), np.asarray(c["cov"], float), int(c["count"])))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"classes[{i}] needs mean, cov and count ({exc})") from None
    return specs


def cmd_synth(cfg: dict) -> int:
    specs = _specs(cfg)
    data = synth_gaussians(specs, cfg["seed"])
    train, test = stratified_split(data, _split_arg(cfg["train_per_class"]), cfg["seed"])
    out = _out_dir(cfg)
    write_csv(train, out / "train.csv")
    write_csv(test, out / "test.csv")
    means = [np.asarray(s.mean, float) for s in specs]
    dist = [[float(np.linalg.norm(a - b)) for b in means] for a in means]
    manifest = {
        "seed": cfg["seed"],
        "train_per_class": cfg["train_per_class"],
        "classes": [{"mean": s.mean.tolist(), "cov": s.cov.tolist(), "count": s.count} for s in specs],
        "mean_distance": dist,
        "train_rows": len(train),
        "test_rows": len(test),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {len(train)} train and {len(test)} test rows to {out}")
    return EXIT_OK


def _train_test(cfg: dict) -> tuple[Dataset, Dataset | None]:
    if cfg["train"]:
        train = load_csv(cfg["train"])
        test = load_csv(cfg["test"]) if cfg["test"] else None
    elif cfg["data"]:
        if cfg["split"] is None:
            raise ConfigError("--data needs --split (per-class count or fraction)")
        train, test = stratified_split(load_csv(cfg["data"]), _split_arg(cfg["split"]), cfg["seed"])
    else:
        raise ConfigError("train needs --train (and optionally --test) or --data with --split")
    if test is not None:
        _check_compatible(train.feature_dim, train.num_classes, test, cfg["test"] or cfg["data"])
    return train, test


def _check_compatible(dim: int, classes: int, data: Dataset, where) -> None:
    if data.feature_dim != dim:
        raise ConfigError(f"{where}: expected {dim} features, found {data.feature_dim}")
    if data.num_classes > classes:
        raise ConfigError(f"{where}: expected at most {classes} classes, found labels up to {data.num_classes - 1}")


def _metrics_block(net, data: Dataset, classes: int) -> dict:
    pred = predict(net, data.features)
    cm = confusion(data.labels, pred, classes)
    trace, t2 = embedding_stats(net, Dataset(data.features, data.labels, classes))
    return report_dict(metrics(cm), cm, intra_class_trace=trace, mean_t2=t2)


def cmd_train(cfg: dict) -> int:
    tcfg = train_config(cfg)
    train, test = _train_test(cfg)
    out = _out_dir(cfg)
    with open(out / "loss_log.csv", "w", encoding="utf-8", newline="\n") as log:
        log.write("iteration,l_joint,l_s,l_stat\n")
        net, _ = fit(train, tcfg, log=lambda r: log.write(f"{r.iteration},{r.l_joint!r},{r.l_s!r},{r.l_stat!r}\n"))
    save_checkpoint(net, out / "checkpoint.json")
    doc = {"train": _metrics_block(net, train, train.num_classes)}
    if test is not None:
        doc["test"] = _metrics_block(net, test, train.num_classes)
    write_report(doc, out / "metrics.json")
    for split, block in doc.items():
        print(f"[{split}]")
        print(format_report(block))
    return EXIT_OK


def cmd_gradcheck(cfg: dict) -> int:
    rep = run_gradcheck(cfg["batches"], cfg["seed"], lam=cfg["lambda"], delta=cfg["delta"],
                        ridge_eps=cfg["ridge_eps"], hinge=cfg["hinge"])
    tol = cfg["tolerance"]
    ok = rep.passed(tol)
    print(f"batches={rep.batches}")
    print(f"exact_max_rel_err={rep.exact_max_rel_err:.3e} tolerance={tol:.0e} {'PASS' if ok else 'FAIL'}")
    print(f"l0 paper/exact per class: ratio min={min(rep.l0_ratio):.6f} max={max(rep.l0_ratio):.6f} "
          f"max |ratio - (n_k-1)/n_k|={rep.l0_ratio_gap:.3e} max_angle_deg={np.nanmax(rep.l0_angle_deg):.3e}")
    if rep.ldiv_pairs_checked:
        print(f"l_div paper/exact: pairs={rep.ldiv_pairs_checked} "
              f"median_angle_deg={np.median(rep.ldiv_angle_deg):.2f} max_angle_deg={max(rep.ldiv_angle_deg):.2f} "
              f"median_ratio={np.median(rep.ldiv_ratio):.4f}")
    else:
        print("l_div paper/exact: no pairs checked")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_eval(cfg: dict) -> int:
    if not cfg["checkpoint"] or not (cfg["data"] or cfg["test"]):
        raise ConfigError("eval needs --checkpoint and --data")
    net = load_checkpoint(cfg["checkpoint"])
    where = cfg["data"] or cfg["test"]
    data = load_csv(where)
    _check_compatible(net.input_dim, net.num_classes, data, where)
    pred = predict(net, data.features)
    cm = confusion(data.labels, pred, net.num_classes)
    f = None
    if cfg["baseline"]:
        base = load_checkpoint(cfg["baseline"])
        if base.input_dim != net.input_dim or base.num_classes != net.num_classes:
            raise ConfigError(f"baseline dims {base.dims} do not match checkpoint dims {net.dims}")
        f = mcnemar(pred == data.labels, predict(base, data.features) == data.labels)
    doc = report_dict(metrics(cm), cm, mcnemar_f=f)
    print(format_report(doc))
    if cfg["out"] != ".":
        write_report(doc, _out_dir(cfg) / "eval.json")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "gradcheck": cmd_gradcheck, "eval": cmd_eval}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--config", help="JSON file with flat keys")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="output directory")
    h = common.add_argument_group("hyperparameters")
    h.add_argument("--lambda", dest="lambda", type=float, help="weight of the diversity term")
    h.add_argument("--beta", type=float, help="weight of the statistical loss in the joint loss")
    h.add_argument("--delta", type=float)
    h.add_argument("--lr", type=float)
    h.add_argument("--iterations", type=int)
    h.add_argument("--batch-size", dest="batch_size", type=int)
    h.add_argument("--ridge-eps", dest="ridge_eps", type=float, help="fixed ridge; default is scale-aware")
    h.add_argument("--grad-mode", dest="grad_mode", choices=["paper", "exact"])
    h.add_argument("--hinge", action="store_const", const=True, help="clip each pair term at zero")
    h.add_argument("--hidden-dims", dest="hidden_dims", type=lambda s: [int(v) for v in s.split(",")],
                   help="comma separated, e.g. 32,16")
    h.add_argument("--init-std", dest="init_std", help="number or fan_in")

    parser = argparse.ArgumentParser(prog="statloss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="sample Gaussian classes to train/test CSVs")
    p.add_argument("--preset", choices=["benchmark"])
    p.add_argument("--train-per-class", dest="train_per_class", type=float,
                   help="training rows per class (>= 1) or fraction (< 1)")

    p = sub.add_parser("train", parents=[common], help="train a network and write artifacts")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--data")
    p.add_argument("--split", type=float, help="per-class training count or fraction for --data")

    p = sub.add_parser("gradcheck", parents=[common], help="check exact gradients against finite differences")
    p.add_argument("--batches", type=int)
    p.add_argument("--tolerance", type=float)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on a CSV dataset")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--baseline", help="second checkpoint for McNemar's test")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (ParseError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (StatLossError, ConfigError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
