"""Command-line interface.

Subcommands: gen-data, train, eval, diagnose, sweep-delta, gradcheck.
Config values come from (lowest to highest precedence) built-in defaults,
a `key = value` config file, and command-line flags. Every run writes a
manifest listing the fully resolved config and every artifact produced, in
the same key=value format, so a run can be replayed from its manifest.

Exit codes: 0 ok, 2 usage/config, 3 data or IO, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import backends
from .data import (
    Dataset,
    SyntheticSpec,
    gen_synthetic,
    load_dataset_csv,
    load_idx_pair,
    save_dataset_csv,
)
from .diagnostics import diagnose, report_csv as diag_report_csv
from .errors import (
    BadMagic,
    CorruptTensor,
    CountMismatch,
    DegenerateMean,
    DimensionMismatch,
    EmptyClassError,
    InvariantViolation,
    MissingGalleryIdentity,
    NonFiniteLoss,
    NoPairs,
    NoValidTriplet,
    RadiusMismatch,
    ShapeMismatch,
    SingleClassError,
    TooFewClasses,
    TruncatedFile,
    UnseparableSpec,
    VersionMismatch,
    ZeroVectorError,
)
from .evaluation import (
    random_distractors,
    rank1_identification,
    report_csv as eval_report_csv,
    roc_csv,
    split_gallery_probes,
    verification_roc,
)
from .gradcheck import check_loss_gradients
from .losses import LossKind, MarginConfig
from .training import (
    TrainConfig,
    embed_dataset,
    epoch_log_csv,
    load_checkpoint,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_USAGE_ERRORS = (
    InvariantViolation,
    DimensionMismatch,
    RadiusMismatch,
    ShapeMismatch,
    SingleClassError,
    ValueError,
)
_DATA_ERRORS = (
    OSError,
    BadMagic,
    TruncatedFile,
    CountMismatch,
    CorruptTensor,
    VersionMismatch,
    EmptyClassError,
    UnseparableSpec,
    TooFewClasses,
    NoPairs,
    MissingGalleryIdentity,
    DegenerateMean,
)
_NUMERIC_ERRORS = (NonFiniteLoss, ZeroVectorError, NoValidTriplet)


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    out_dir: str
    artifacts: list = field(default_factory=list)

    def add(self, path) -> str:
        self.artifacts.append(str(path))
        return str(path)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"command = {self.command}\n")
            fh.write(f"seed = {self.seed}\n")
            fh.write(f"out = {self.out_dir}\n")
            for key in sorted(self.config):
                fh.write(f"{key} = {self.config[key]}\n")
            for i, artifact in enumerate(self.artifacts):
                fh.write(f"artifact_{i} = {artifact}\n")


def parse_config_file(path) -> dict:
    """`key = value` lines; blank lines and #-comments ignored."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {stripped!r}")
            key, _, value = stripped.partition("=")
            out[key.strip()] = value.strip()
    return out


def _int_list(text: str):
    text = text.strip()
    return tuple(int(tok) for tok in text.split(",") if tok.strip()) if text else ()


def _float_list(text: str):
    text = text.strip()
    return tuple(float(tok) for tok in text.split(",") if tok.strip()) if text else ()


class _Resolver:
    """defaults < config file < explicit flags, with per-key casting."""

    def __init__(self, args, defaults: dict):
        self.flags = vars(args)
        self.file_cfg = parse_config_file(args.config) if getattr(args, "config", None) else {}
        self.defaults = defaults
        self.resolved = {}

    def get(self, key: str, cast):
        flag_val = self.flags.get(key)
        if flag_val is not None:
            value = flag_val if not isinstance(flag_val, str) else cast(flag_val)
        elif key in self.file_cfg:
            value = cast(self.file_cfg[key])
        else:
            value = self.defaults[key]
        self.resolved[key] = value
        return value

    def manifest_config(self) -> dict:
        out = {}
        for key, value in self.resolved.items():
            if isinstance(value, tuple):
                out[key] = ",".join(str(v) for v in value)
            elif isinstance(value, float):
                out[key] = repr(value)
            elif isinstance(value, LossKind):
                out[key] = value.value
            else:
                out[key] = str(value)
        return out


def _out_dir(args, command: str) -> Path:
    out = Path(args.out if args.out else f"runs/{command}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(res: _Resolver) -> Dataset:
    images = res.get("idx_images", str)
    labels = res.get("idx_labels", str)
    csv = res.get("dataset", str)
    if images and labels:
        return load_idx_pair(images, labels)
    if images or labels:
        raise ValueError("IDX input needs both idx_images and idx_labels")
    if not csv:
        raise ValueError("no dataset given (use --dataset or --idx-images/--idx-labels)")
    return load_dataset_csv(csv)


_DATASET_DEFAULTS = {"dataset": "", "idx_images": "", "idx_labels": ""}

_TRAIN_DEFAULTS = {
    "loss": "npt",
    "delta": None,  # None -> r^2 / 2
    "radius": 1.0,
    "epochs": 30,
    "batch_size": 64,
    "lr": 0.1,
    "momentum": 0.9,
    "weight_decay": 1e-4,
    "decay_epochs": (20, 27),
    "scale": 16.0,
    "angular_margin": 0.5,
    "embed_dim": 8,
    "hidden_dims": (64, 64),
    "update_negative_proxies": 1,
    "proxy_weight_decay": 1,
    "track_dn_dk": 0,
    **_DATASET_DEFAULTS,
}


def _train_config(res: _Resolver, seed: int, checkpoint_path=None) -> TrainConfig:
    radius = res.get("radius", float)
    delta = res.get("delta", float)
    margin = MarginConfig(
        delta=0.5 * radius * radius if delta is None else delta,
        scale=res.get("scale", float),
        angular_margin=res.get("angular_margin", float),
    )
    res.resolved["delta"] = margin.delta
    return TrainConfig(
        loss_kind=LossKind(res.get("loss", str)),
        margin=margin,
        radius=radius,
        epochs=res.get("epochs", int),
        batch_size=res.get("batch_size", int),
        lr=res.get("lr", float),
        momentum=res.get("momentum", float),
        weight_decay=res.get("weight_decay", float),
        decay_epochs=res.get("decay_epochs", _int_list),
        seed=seed,
        checkpoint_path=str(checkpoint_path) if checkpoint_path else None,
        embed_dim=res.get("embed_dim", int),
        hidden_dims=res.get("hidden_dims", _int_list),
        update_negative_proxies=bool(res.get("update_negative_proxies", int)),
        proxy_weight_decay=bool(res.get("proxy_weight_decay", int)),
        track_dn_dk=bool(res.get("track_dn_dk", int)),
    )


def cmd_gen_data(args) -> int:
    res = _Resolver(args, {
        "classes": 10, "dim": 16, "samples": 200, "sigma": 0.1,
    })
    seed = args.seed if args.seed is not None else int(res.file_cfg.get("seed", 0))
    spec = SyntheticSpec(
        class_count=res.get("classes", int),
        input_dim=res.get("dim", int),
        samples_per_class=res.get("samples", int),
        noise_sigma=res.get("sigma", float),
        seed=seed,
    )
    ds = gen_synthetic(spec)
    out = _out_dir(args, "gen-data")
    manifest = RunManifest("gen-data", res.manifest_config(), seed, str(out))
    csv_path = out / "dataset.csv"
    save_dataset_csv(ds, manifest.add(csv_path))
    manifest.write(out / "manifest.txt")
    print(f"wrote {csv_path} ({len(ds)} samples, {ds.class_count} classes)")
    return EXIT_OK


def cmd_train(args) -> int:
    res = _Resolver(args, _TRAIN_DEFAULTS)
    seed = args.seed if args.seed is not None else int(res.file_cfg.get("seed", 0))
    dataset = _load_dataset(res)
    out = _out_dir(args, "train")
    config = _train_config(res, seed, checkpoint_path=out / "checkpoint.npc")
    manifest = RunManifest("train", res.manifest_config(), seed, str(out))
    manifest.add(out / "checkpoint.npc")
    _, _, logs = train(config, dataset)
    log_path = out / "train_log.csv"
    epoch_log_csv(logs, manifest.add(log_path))
    manifest.write(out / "manifest.txt")
    print(
        f"trained {config.loss_kind.value} for {config.epochs} epochs: "
        f"final mean loss {logs[-1].mean_loss:.6f}, "
        f"min proxy distance {logs[-1].min_pairwise_proxy_distance:.4f}"
    )
    return EXIT_OK


def _eval_snapshot(model, bank, dataset, seed, distractors, pairs):
    """Shared eval protocol: embed, verify on pairs, identify with distractors."""
    emb = embed_dataset(model, dataset, bank.radius)
    report = verification_roc(emb, dataset.labels, pair_seed=seed, pairs_per_kind=pairs)
    gal, gal_labels, probes, probe_labels = split_gallery_probes(emb, dataset.labels, seed)
    dis = random_distractors(distractors, bank.dim, bank.radius, seed + 1)
    report.rank1 = rank1_identification(gal, gal_labels, probes, probe_labels, dis)
    report.n_probes = len(probes)
    report.n_distractors = distractors
    return report


def cmd_eval(args) -> int:
    res = _Resolver(args, {"distractors": 0, "pairs": 10000, "checkpoint": "", **_DATASET_DEFAULTS})
    seed = args.seed if args.seed is not None else int(res.file_cfg.get("seed", 0))
    ckpt = res.get("checkpoint", str)
    if not ckpt:
        raise ValueError("eval needs --checkpoint")
    model, bank = load_checkpoint(ckpt)
    dataset = _load_dataset(res)
    report = _eval_snapshot(
        model, bank, dataset, seed,
        res.get("distractors", int), res.get("pairs", int),
    )
    out = _out_dir(args, "eval")
    manifest = RunManifest("eval", res.manifest_config(), seed, str(out))
    roc_csv(report, manifest.add(out / "roc.csv"))
    eval_report_csv(report, manifest.add(out / "eval_report.csv"))
    manifest.write(out / "manifest.txt")
    print(f"auc {report.auc:.4f}, rank1 {report.rank1:.4f} "
          f"({report.n_probes} probes, {report.n_distractors} distractors)")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    res = _Resolver(args, {
        "min_samples": 20, "delta": None, "radius": 1.0, "checkpoint": "",
        **_DATASET_DEFAULTS,
    })
    seed = args.seed if args.seed is not None else int(res.file_cfg.get("seed", 0))
    ckpt = res.get("checkpoint", str)
    if not ckpt:
        raise ValueError("diagnose needs --checkpoint")
    model, bank = load_checkpoint(ckpt)
    dataset = _load_dataset(res)
    delta = res.get("delta", float)
    if delta is None:
        delta = 0.5 * bank.radius * bank.radius
        res.resolved["delta"] = delta
    emb = embed_dataset(model, dataset, bank.radius)
    report = diagnose(emb, dataset.labels, bank, delta, res.get("min_samples", int))
    out = _out_dir(args, "diagnose")
    manifest = RunManifest("diagnose", res.manifest_config(), seed, str(out))
    diag_report_csv(report, manifest.add(out / "diag_report.csv"))
    manifest.write(out / "manifest.txt")
    for key, value in report.rows():
        print(f"{key} = {value}")
    return EXIT_OK


def cmd_sweep_delta(args) -> int:
    res = _Resolver(args, {
        **_TRAIN_DEFAULTS,
        "deltas": (0.0, 0.5, 1.0),
        "seeds": (0, 1, 2),
        "distractors": 1000,
    })
    deltas = res.get("deltas", _float_list)
    seeds = res.get("seeds", _int_list)
    if not deltas or not seeds:
        raise ValueError("sweep needs at least one delta and one seed")
    distractors = res.get("distractors", int)
    dataset = _load_dataset(res)
    base = _train_config(res, seeds[0])
    out = _out_dir(args, "sweep-delta")
    manifest = RunManifest("sweep-delta", res.manifest_config(), seeds[0], str(out))

    rows = []
    for delta in deltas:
        for seed in seeds:
            config = replace(
                base,
                seed=seed,
                margin=MarginConfig(
                    delta=delta, scale=base.margin.scale,
                    angular_margin=base.margin.angular_margin,
                ),
            )
            model, bank, logs = train(config, dataset)
            emb = embed_dataset(model, dataset, bank.radius)
            gal, gal_labels, probes, probe_labels = split_gallery_probes(emb, dataset.labels, seed)
            dis = random_distractors(distractors, bank.dim, bank.radius, seed + 1)
            rank1 = rank1_identification(gal, gal_labels, probes, probe_labels, dis)
            rows.append((delta, seed, rank1, logs[-1].mean_loss,
                         logs[-1].min_pairwise_proxy_distance))
            print(f"delta={delta} seed={seed}: rank1={rank1:.4f} "
                  f"final_loss={logs[-1].mean_loss:.6f}")

    sweep_path = out / "sweep.csv"
    with open(manifest.add(sweep_path), "w") as fh:
        fh.write("delta,seed,rank1,final_loss,min_proxy_dist\n")
        for delta, seed, rank1, final_loss, min_dist in rows:
            fh.write(f"{delta!r},{seed},{rank1!r},{final_loss!r},{min_dist!r}\n")
    manifest.write(out / "manifest.txt")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    res = _Resolver(args, {"loss": "all", "trials": 100})
    seed = args.seed if args.seed is not None else int(res.file_cfg.get("seed", 0))
    trials = res.get("trials", int)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    which = res.get("loss", str)
    kinds = list(LossKind) if which == "all" else [LossKind(which)]
    print("loss,checked,resampled,max_rel_err,status")
    failed = False
    for kind in kinds:
        report = check_loss_gradients(kind, trials=trials, seed=seed)
        status = "pass" if report.ok else "FAIL"
        failed = failed or not report.ok
        print(f"{kind.value},{report.checked},{report.resampled},"
              f"{report.max_rel_err:.3e},{status}")
        for line in report.failures[:5]:
            print(f"  {line}", file=sys.stderr)
    return EXIT_NUMERIC if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nptmetric",
        description="Hypersphere metric learning with nearest-negative proxy hinges.",
    )
    parser.add_argument("--backend-info", action="store_true",
                        help="print the selected compute backend and exit")
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--config", default=None, help="key = value config file")

    def dataset_flags(p):
        p.add_argument("--dataset", default=None, help="dataset CSV path")
        p.add_argument("--idx-images", dest="idx_images", default=None)
        p.add_argument("--idx-labels", dest="idx_labels", default=None)

    def train_flags(p):
        p.add_argument("--loss", default=None,
                       choices=[k.value for k in LossKind], metavar="KIND")
        p.add_argument("--delta", type=float, default=None)
        p.add_argument("--radius", type=float, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--momentum", type=float, default=None)
        p.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
        p.add_argument("--decay-epochs", dest="decay_epochs", default=None,
                       help="comma-separated epoch numbers")
        p.add_argument("--scale", type=float, default=None)
        p.add_argument("--angular-margin", dest="angular_margin", type=float, default=None)
        p.add_argument("--embed-dim", dest="embed_dim", type=int, default=None)
        p.add_argument("--hidden-dims", dest="hidden_dims", default=None)
        p.add_argument("--track-dn-dk", dest="track_dn_dk", action="store_const",
                       const=1, default=None)
        p.add_argument("--no-update-negative-proxies", dest="update_negative_proxies",
                       action="store_const", const=0, default=None)
        p.add_argument("--no-proxy-weight-decay", dest="proxy_weight_decay",
                       action="store_const", const=0, default=None)

    p = sub.add_parser("gen-data", help="write a synthetic dataset CSV")
    common(p)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--samples", type=int, default=None, help="samples per class")
    p.add_argument("--sigma", type=float, default=None)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p)
    dataset_flags(p)
    train_flags(p)

    p = sub.add_parser("eval", help="verification + identification report")
    common(p)
    dataset_flags(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--distractors", type=int, default=None)
    p.add_argument("--pairs", type=int, default=None)

    p = sub.add_parser("diagnose", help="cluster-geometry diagnostics report")
    common(p)
    dataset_flags(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--min-samples", dest="min_samples", type=int, default=None)

    p = sub.add_parser("sweep-delta", help="train/eval grid over margins and seeds")
    common(p)
    dataset_flags(p)
    train_flags(p)
    p.add_argument("--deltas", default=None, help="comma-separated margin values")
    p.add_argument("--seeds", default=None, help="comma-separated seeds")
    p.add_argument("--distractors", type=int, default=None)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(p)
    p.add_argument("--loss", default=None,
                   choices=[k.value for k in LossKind] + ["all"], metavar="KIND")
    p.add_argument("--trials", type=int, default=None)

    return parser


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "diagnose": cmd_diagnose,
    "sweep-delta": cmd_sweep_delta,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits on usage errors / --help
        if exc.code is None:
            return EXIT_OK
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if args.backend_info:
        print(f"backend: {backends.backend_name()} "
              f"(available: {', '.join(backends.available_backends())})")
        return EXIT_OK
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except _USAGE_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
