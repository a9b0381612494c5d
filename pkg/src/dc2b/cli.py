"""Command-line entry point: prepare data, train embeddings, run evaluations.

Subcommands: prepare, train-embeddings, replay, sweep, regret, compare.
Every run writes a JSON manifest (merged config, seeds, input hashes,
version string) next to its artifacts so results can be reproduced.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import data, evaluation, synthetic
from .exceptions import InputError
from .policies import POLICY_KINDS, PolicyConfig

USAGE_EXIT = 2
FAILURE_EXIT = 1

DEFAULTS = {
    "threshold": 3,
    "policy": "dc2b",
    "alpha": 3.0,
    "lambda": 1.0,
    "slate-size": 10,
    "trials": 5,
    "epsilon": 0.1,
    "mmr-alpha": 0.9,
    "dpp-theta": 0.6,
    "seed": 0,
    "dim": 10,
    "epochs": data.DEFAULT_BPR_EPOCHS,
    "lr": data.DEFAULT_BPR_LR,
    "reg": data.DEFAULT_BPR_REG,
    "episodes": 20,
    "n-items": 12,
    "env-alpha": 1.0,
    "noise-sigma": 0.1,
    "values": "",
    "parameter": "alpha",
}


def _read_config_file(path: str) -> dict:
    """Flat key=value lines; keys match flag names without the leading dashes."""
    out = {}
    p = Path(path)
    if not p.is_file():
        raise InputError(f"config file {path} does not exist")
    for lineno, line in enumerate(p.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def merge_options(args: argparse.Namespace, keys) -> dict:
    """Defaults, overridden by config-file values, overridden by CLI flags."""
    merged = {k: DEFAULTS[k] for k in keys if k in DEFAULTS}
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        for k, v in _read_config_file(cfg_path).items():
            if k not in keys:
                raise InputError(f"unknown config key {k!r}")
            merged[k] = type(DEFAULTS[k])(v) if k in DEFAULTS else v
    for k in keys:
        cli_val = getattr(args, k.replace("-", "_"), None)
        if cli_val is not None:
            merged[k] = cli_val
    return merged


def policy_config(opts: dict, kind: str | None = None) -> PolicyConfig:
    return PolicyConfig(
        kind=kind or opts["policy"],
        alpha=float(opts["alpha"]),
        lambda_prior=float(opts["lambda"]),
        mmr_alpha=float(opts["mmr-alpha"]),
        epsilon=float(opts["epsilon"]),
        dpp_map_theta=float(opts["dpp-theta"]),
        slate_size=int(opts["slate-size"]),
        seed=int(opts["seed"]),
    )


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _version_string() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "dc2b-0.1.0"


def write_manifest(out_dir: Path, command: str, opts: dict, inputs) -> Path:
    manifest = {
        "command": command,
        "config": {k: opts[k] for k in sorted(opts)},
        "seed": opts.get("seed"),
        "input_hashes": {str(p): _sha256(p) for p in inputs},
        "version": _version_string(),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


class ArtifactWriter:
    """Tracks written files so a failed run leaves no partial outputs."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.written: list[Path] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def track(self, path: Path) -> Path:
        self.written.append(path)
        return path

    def cleanup(self):
        for path in self.written:
            path.unlink(missing_ok=True)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get("DC2B_THREADS", "1")))
    except ValueError:
        return 1


# --- subcommand implementations ---------------------------------------------


def cmd_prepare(args) -> int:
    opts = merge_options(args, ["threshold", "seed"])
    if args.dataset is None or args.data_dir is None:
        raise InputError("prepare requires --dataset and --data-dir")
    ds = data.load_dataset(args.data_dir, args.dataset, int(opts["threshold"]))
    split = data.split_users(ds.interactions["user"].unique(), seed=int(opts["seed"])) \
        if ds.n_users >= 2 else None
    out = ArtifactWriter(Path(args.out))
    try:
        ds.interactions.to_csv(
            out.track(out.out_dir / "interactions.csv"), index=False
        )
        (out.track(out.out_dir / "categories.json")).write_text(
            json.dumps({str(i): sorted(c) for i, c in ds.categories.items()})
        )
        split_doc = (
            {"train_users": list(split.train_users),
             "test_users": list(split.test_users),
             "seed": split.seed}
            if split else {"train_users": [], "test_users": [], "seed": int(opts["seed"])}
        )
        (out.track(out.out_dir / "split.json")).write_text(json.dumps(split_doc))
        stats = {
            "users": ds.n_users, "items": ds.n_items,
            "interactions": ds.n_interactions, "density": ds.density,
        }
        opts.update({"dataset": args.dataset, "stats": stats})
        out.track(write_manifest(out.out_dir, "prepare", opts, _input_files(args)))
        print(
            f"prepare: {stats['users']} users, {stats['items']} items, "
            f"{stats['interactions']} interactions, density {100 * stats['density']:.2f}%"
        )
    except Exception:
        out.cleanup()
        raise
    return 0


def _input_files(args):
    files = []
    data_dir = getattr(args, "data_dir", None)
    if data_dir and Path(data_dir).is_dir():
        files = sorted(p for p in Path(data_dir).iterdir() if p.is_file())
    return files


def _load_prepared(prepared_dir: str):
    pdir = Path(prepared_dir)
    interactions_path = pdir / "interactions.csv"
    split_path = pdir / "split.json"
    categories_path = pdir / "categories.json"
    for p in (interactions_path, split_path, categories_path):
        if not p.is_file():
            raise InputError(f"prepared directory is missing {p.name}")
    import pandas as pd

    interactions = pd.read_csv(interactions_path)
    split_doc = json.loads(split_path.read_text())
    categories = {
        int(i): frozenset(c)
        for i, c in json.loads(categories_path.read_text()).items()
    }
    return interactions, split_doc, categories, [interactions_path, split_path, categories_path]


def cmd_train_embeddings(args) -> int:
    opts = merge_options(args, ["dim", "epochs", "lr", "reg", "seed"])
    if args.prepared is None:
        raise InputError("train-embeddings requires --prepared")
    interactions, split_doc, _, inputs = _load_prepared(args.prepared)
    train_users = set(split_doc["train_users"])
    train = interactions[interactions["user"].isin(train_users)]
    result = data.train_bpr_embeddings(
        train,
        d=int(opts["dim"]),
        epochs=int(opts["epochs"]),
        lr=float(opts["lr"]),
        reg=float(opts["reg"]),
        seed=int(opts["seed"]),
    )
    out = ArtifactWriter(Path(args.out))
    try:
        data.save_embeddings(
            out.track(out.out_dir / "embeddings.tsv"), result.item_ids, result.item_factors
        )
        np.savetxt(out.track(out.out_dir / "user_mean.tsv"), result.mean_user[None, :], delimiter="\t")
        opts["holdout_auc"] = result.holdout_auc
        out.track(write_manifest(out.out_dir, "train-embeddings", opts, inputs))
        print(f"train-embeddings: {len(result.item_ids)} items, holdout AUC {result.holdout_auc:.4f}")
    except Exception:
        out.cleanup()
        raise
    return 0


REPLAY_KEYS = [
    "policy", "alpha", "lambda", "slate-size", "trials", "epsilon",
    "mmr-alpha", "dpp-theta", "seed",
]


def _replay_setup(args):
    if args.prepared is None or args.embeddings is None:
        raise InputError("this command requires --prepared and --embeddings")
    interactions, split_doc, categories, inputs = _load_prepared(args.prepared)
    emb_path = Path(args.embeddings)
    catalog = data.load_embeddings(emb_path, categories)
    inputs.append(emb_path)
    mean_path = emb_path.parent / "user_mean.tsv"
    if mean_path.is_file():
        mean_user = np.loadtxt(mean_path, delimiter="\t").ravel()
        inputs.append(mean_path)
    else:
        mean_user = np.zeros(catalog.dim)
    test_users = set(split_doc["test_users"])
    in_catalog = set(catalog.ids)
    positives = {
        int(u): {int(i) for i in grp["item"] if int(i) in in_catalog}
        for u, grp in interactions[interactions["user"].isin(test_users)].groupby("user")
    }
    positives = {u: s for u, s in positives.items() if s}
    return catalog, mean_user, positives, inputs


def _metrics_row(name: str, report) -> list:
    return [
        name,
        f"{report.precision_at[10]:.6f}",
        f"{report.precision_at[30]:.6f}",
        f"{report.precision_at[50]:.6f}",
        f"{report.diversity:.6f}",
        f"{report.f_measure:.6f}",
    ]


METRICS_HEADER = ["policy", "prec@10", "prec@30", "prec@50", "diversity", "f_measure"]


def cmd_replay(args) -> int:
    opts = merge_options(args, REPLAY_KEYS)
    catalog, mean_user, positives, inputs = _replay_setup(args)
    cfg = policy_config(opts)
    report = evaluation.evaluate_policy(
        cfg, catalog, mean_user, positives,
        T=int(opts["trials"]), seed=int(opts["seed"]),
        max_workers=_max_workers(),
    )
    out = ArtifactWriter(Path(args.out))
    try:
        _write_csv(
            out.track(out.out_dir / "metrics.csv"),
            METRICS_HEADER, [_metrics_row(cfg.kind, report)],
        )
        out.track(write_manifest(out.out_dir, "replay", opts, inputs))
        print(f"replay[{cfg.kind}]: " + ", ".join(
            f"{h}={v}" for h, v in zip(METRICS_HEADER[1:], _metrics_row(cfg.kind, report)[1:])
        ))
    except Exception:
        out.cleanup()
        raise
    return 0


def cmd_compare(args) -> int:
    opts = merge_options(args, REPLAY_KEYS)
    catalog, mean_user, positives, inputs = _replay_setup(args)
    rows = []
    for kind in POLICY_KINDS:
        cfg = policy_config(opts, kind=kind)
        report = evaluation.evaluate_policy(
            cfg, catalog, mean_user, positives,
            T=int(opts["trials"]), seed=int(opts["seed"]),
            max_workers=_max_workers(),
        )
        rows.append(_metrics_row(kind, report))
    out = ArtifactWriter(Path(args.out))
    try:
        _write_csv(out.track(out.out_dir / "compare.csv"), METRICS_HEADER, rows)
        out.track(write_manifest(out.out_dir, "compare", opts, inputs))
        for row in rows:
            print("compare: " + ", ".join(map(str, row)))
    except Exception:
        out.cleanup()
        raise
    return 0


def cmd_sweep(args) -> int:
    opts = merge_options(args, REPLAY_KEYS + ["parameter", "values"])
    catalog, mean_user, positives, inputs = _replay_setup(args)
    parameter = opts["parameter"]
    if parameter not in ("alpha", "slate_size"):
        raise InputError(f"--parameter must be alpha or slate_size, got {parameter!r}")
    raw_values = [v for v in str(opts["values"]).split(",") if v.strip()]
    if not raw_values:
        raise InputError("sweep requires --values v1,v2,...")
    values = [float(v) for v in raw_values]
    base_cfg = policy_config(opts)
    rows = evaluation.sweep(
        parameter, values, base_cfg, catalog, mean_user, positives,
        T=int(opts["trials"]), seed=int(opts["seed"]),
    )
    out = ArtifactWriter(Path(args.out))
    try:
        _write_csv(
            out.track(out.out_dir / "sweep.csv"),
            ["value", "prec@50", "diversity", "f_measure"],
            [[v, f"{p:.6f}", f"{d:.6f}", f"{f:.6f}"] for v, p, d, f in rows],
        )
        out.track(write_manifest(out.out_dir, "sweep", opts, inputs))
    except Exception:
        out.cleanup()
        raise
    return 0


def cmd_regret(args) -> int:
    opts = merge_options(
        args,
        ["policy", "alpha", "lambda", "slate-size", "trials", "epsilon",
         "mmr-alpha", "dpp-theta", "seed", "episodes", "n-items", "dim",
         "env-alpha", "noise-sigma"],
    )
    kind = opts["policy"]
    if kind not in POLICY_KINDS + ("oracle", "random"):
        raise InputError(f"unknown regret policy {kind!r}")
    env = synthetic.make_synthetic_env(
        n_items=int(opts["n-items"]),
        d=int(opts["dim"]),
        noise_sigma=float(opts["noise-sigma"]),
        alpha=float(opts["env-alpha"]),
        seed=int(opts["seed"]),
    )
    cfg = policy_config(opts, kind=kind if kind in POLICY_KINDS else "dc2b")
    curve = evaluation.simulate_regret(
        env, kind, cfg,
        T=int(opts["trials"]),
        episodes=int(opts["episodes"]),
        approx_oracle=bool(args.approx_oracle),
    )
    out = ArtifactWriter(Path(args.out))
    try:
        _write_csv(
            out.track(out.out_dir / "regret.csv"),
            ["trial", "cumulative_regret"],
            [[t + 1, f"{v:.8f}"] for t, v in enumerate(curve)],
        )
        out.track(write_manifest(out.out_dir, "regret", opts, []))
        print(f"regret[{kind}]: final cumulative regret {curve[-1]:.4f}")
    except Exception:
        out.cleanup()
        raise
    return 0


# --- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dc2b", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("prepare", help="filter a raw dataset and split users")
    p.add_argument("--dataset", choices=["ml100k", "ml1m", "anime"])
    p.add_argument("--data-dir")
    p.add_argument("--threshold", type=int)
    common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train-embeddings", help="train BPR item embeddings")
    p.add_argument("--prepared", help="directory written by prepare")
    p.add_argument("--dim", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--reg", type=float)
    common(p)
    p.set_defaults(func=cmd_train_embeddings)

    def replay_args(p):
        p.add_argument("--prepared")
        p.add_argument("--embeddings")
        p.add_argument("--policy", choices=list(POLICY_KINDS))
        p.add_argument("--alpha", type=float)
        p.add_argument("--lambda", dest="lambda_", type=float)
        p.add_argument("--slate-size", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--mmr-alpha", type=float)
        p.add_argument("--dpp-theta", type=float)
        common(p)

    p = sub.add_parser("replay", help="offline replay of one policy")
    replay_args(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("compare", help="replay all policies on one split")
    replay_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="replay across parameter values")
    replay_args(p)
    p.add_argument("--parameter", choices=["alpha", "slate_size"])
    p.add_argument("--values", help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("regret", help="synthetic-environment regret simulation")
    p.add_argument("--policy", choices=list(POLICY_KINDS) + ["oracle", "random"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda", dest="lambda_", type=float)
    p.add_argument("--slate-size", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--n-items", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--env-alpha", type=float)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--mmr-alpha", type=float)
    p.add_argument("--dpp-theta", type=float)
    p.add_argument("--approx-oracle", action="store_true", default=False)
    common(p)
    p.set_defaults(func=cmd_regret)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # --lambda is stored as lambda_; surface it under the merge key
    if hasattr(args, "lambda_"):
        setattr(args, "lambda", args.lambda_)
    if not hasattr(args, "approx_oracle"):
        args.approx_oracle = False
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return FAILURE_EXIT


if __name__ == "__main__":
    sys.exit(main())
