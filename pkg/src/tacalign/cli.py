"""Command-line entry point.

Subcommands: generate | train | eval-zeroshot | eval-probe | gradcheck |
grasp-demo.  Each command merges an optional ``--config`` file of
``key=value`` lines with flag overrides, and writes the fully resolved
configuration next to its outputs so any run is reproducible from that
file alone.
"""

from __future__ import annotations

import argparse
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import io as tio
from .encoder import init_params, gradient_check, load_checkpoint, save_checkpoint
from .errors import TacalignError
from .evaluation import (
    ProbeConfig,
    eval_probe,
    eval_zero_shot,
    labels_for_dimension,
    train_probe,
    write_confusion_csv,
    write_report_csv,
)
from .grasp import (
    ExternalReasoner,
    GraspEnv,
    GraspEnvState,
    rule_based_reasoner,
    run_refinement,
    scripted_scenario_env,
)
from .labeling import DIMENSIONS, VOCABULARIES
from .pipeline import (
    build_triplet_dataset,
    encode_records,
    open_embedding_source,
    oracle_embeddings,
    prompt_sets,
)
from .sensor import SensorSpec
from .training import BatchTriplet, TrainConfig, full_gradient_check, train, write_loss_curve

DEFAULT_SPLIT_SEED = 1000


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line is not key=value: {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _apply_config_file(args: argparse.Namespace, argv: list[str]) -> None:
    """File values fill in only the options the command line left at default."""
    if not getattr(args, "config", None):
        return
    file_values = _read_config_file(args.config)
    given = {
        a.lstrip("-").replace("-", "_").split("=")[0]
        for a in argv
        if a.startswith("--")
    }
    for key, value in file_values.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ValueError(f"unknown config key {key!r}")
        if attr in given:
            continue
        current = getattr(args, attr)
        if isinstance(current, bool):
            setattr(args, attr, value.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, attr, int(value))
        elif isinstance(current, float):
            setattr(args, attr, float(value))
        else:
            setattr(args, attr, value)


def _write_resolved_config(out_dir: Path, args: argparse.Namespace) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    skip = {"func", "config"}
    lines = []
    for key in sorted(vars(args)):
        if key in skip:
            continue
        lines.append(f"{key}={getattr(args, key)}")
    (out_dir / "resolved_config.txt").write_text("\n".join(lines) + "\n")


def _load_split(args) -> tuple[list, list]:
    records = ds.load_manifest(args.data)
    if args.holdout > 0:
        return ds.split_records(records, args.holdout, args.split_seed)
    return records, []


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        print(
            f"error: output directory {out} is not empty (use --force to overwrite)",
            file=sys.stderr,
        )
        return 1
    _write_resolved_config(out, args)
    records = ds.generate_dataset(
        out,
        count=args.count,
        master_seed=args.seed,
        n_points=args.points,
        image_size=(args.image_w, args.image_h),
        jitter=not args.no_jitter,
    )
    counts = Counter(r.shape for r in records)
    print(f"wrote {len(records)} samples to {out}")
    for shape in sorted(counts):
        print(f"  {shape}: {counts[shape]}")
    return 0


def cmd_train(args) -> int:
    out = Path(args.out)
    _write_resolved_config(out, args)
    train_records, _ = _load_split(args)
    source = open_embedding_source(args.embeddings, args.dim)
    if source.dim != args.dim:
        args.dim = source.dim  # store files own the width
    triplets = build_triplet_dataset(args.data, train_records, source)
    config = TrainConfig(
        batch_size=args.batch_size,
        epochs=args.epochs,
        learning_rate=args.lr,
        seed=args.seed,
        dim=args.dim,
        image_loss=not args.no_image_loss,
    )
    initial = None
    if args.checkpoint:
        initial = load_checkpoint(args.checkpoint, expect_dim=args.dim)
    params, curve = train(triplets, config, initial=initial)
    save_checkpoint(params, out / "checkpoint.tclc")
    write_loss_curve(out / "loss.csv", curve)
    print(
        f"trained {config.epochs} epochs on {len(train_records)} triplets; "
        f"final loss {curve[-1].total:.4f} (tau {curve[-1].tau:.4f})"
    )
    print(f"checkpoint: {out / 'checkpoint.tclc'}")
    return 0


def cmd_eval_zeroshot(args) -> int:
    out = Path(args.out)
    _write_resolved_config(out, args)
    _, eval_records = _load_split(args)
    if not eval_records:
        print("error: eval-zeroshot needs --holdout > 0", file=sys.stderr)
        return 1
    source = open_embedding_source(args.embeddings, args.dim)
    if args.oracle_encoder:
        embeddings = oracle_embeddings(eval_records, source)
    else:
        params = load_checkpoint(args.checkpoint, expect_dim=source.dim)
        embeddings = encode_records(args.data, eval_records, params)
    report = eval_zero_shot(eval_records, embeddings, prompt_sets(source))
    write_report_csv(out / "report.csv", report)
    for dim in DIMENSIONS:
        write_confusion_csv(out / f"confusion_{dim}.csv", report, dim)
    for dim in DIMENSIONS:
        print(f"{dim}: {report.accuracies[dim]:.1f}% (n={report.sample_count})")
    return 0


def cmd_eval_probe(args) -> int:
    out = Path(args.out)
    _write_resolved_config(out, args)
    train_records, eval_records = _load_split(args)
    if not eval_records:
        print("error: eval-probe needs --holdout > 0", file=sys.stderr)
        return 1
    source = open_embedding_source(args.embeddings, args.dim)
    params = load_checkpoint(args.checkpoint, expect_dim=source.dim)
    f_train = encode_records(args.data, train_records, params)
    f_eval = encode_records(args.data, eval_records, params)
    lines = ["dimension,accuracy,n"]
    for dim in DIMENSIONS if args.dimension == "all" else [args.dimension]:
        y_train = labels_for_dimension(train_records, dim)
        y_eval = labels_for_dimension(eval_records, dim)
        head = train_probe(
            f_train, y_train, len(VOCABULARIES[dim]),
            ProbeConfig(epochs=args.probe_epochs, seed=args.seed),
        )
        acc = eval_probe(head, f_eval, y_eval)
        lines.append(f"{dim},{acc!r},{len(eval_records)}")
        print(f"{dim}: probe accuracy {acc:.1f}% (n={len(eval_records)})")
    (out / "probe.csv").write_text("\n".join(lines) + "\n")
    return 0


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    params = init_params(args.seed, 16)
    cloud = rng.uniform(0.0, 1.0, size=(32, 3))
    probe = rng.normal(size=16)
    encoder_err = gradient_check(params, cloud, probe, eps=1e-4)

    clouds = rng.uniform(0.0, 1.0, size=(4, 32, 3))
    f_l = rng.normal(size=(4, 16))
    f_l /= np.linalg.norm(f_l, axis=1, keepdims=True)
    f_i = rng.normal(size=(4, 16))
    f_i /= np.linalg.norm(f_i, axis=1, keepdims=True)
    batch = BatchTriplet(
        ids=[f"g{i}" for i in range(4)],
        clouds=clouds,
        text_embeddings=f_l,
        image_embeddings=f_i,
    )
    full_err = full_gradient_check(batch, params)

    ok = encoder_err < 1e-4 and full_err < 1e-3
    print(f"encoder probe gradient max relative error: {encoder_err:.3e} (limit 1e-4)")
    print(f"full objective gradient max relative error: {full_err:.3e} (limit 1e-3)")
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def cmd_grasp_demo(args) -> int:
    out = Path(args.out)
    _write_resolved_config(out, args)
    reasoner = rule_based_reasoner
    if args.reasoner_cmd:
        reasoner = ExternalReasoner(args.reasoner_cmd)
    traces = []
    if args.scenario == "scripted":
        env = scripted_scenario_env(noise_mm=args.noise)
        traces.append(run_refinement(env, reasoner, max_iters=args.max_iters))
    else:
        for episode in range(args.episodes):
            env = GraspEnv(
                GraspEnvState(contact_offset_mm=np.zeros(2), indentation_mm=1.0),
                rng=np.random.default_rng((args.seed, episode)),
                noise_mm=args.noise,
            )
            env.state = env.random_state()
            traces.append(run_refinement(env, reasoner, max_iters=args.max_iters))
    if isinstance(reasoner, ExternalReasoner):
        reasoner.close()

    with open(out / "traces.jsonl", "w") as fh:
        for trace in traces:
            fh.write(trace.to_json() + "\n")
    successes = sum(t.status == "success" for t in traces)
    print(f"{successes}/{len(traces)} episodes reached success")
    last = traces[-1]
    for step in last.steps:
        print(f"  step {step.index}: {step.description}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tacalign",
        description="Tactile contact dataset synthesis, contrastive alignment, "
        "evaluation, and grasp refinement.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--seed", type=int, default=0, help="master random seed")

    g = sub.add_parser("generate", help="synthesise a labelled contact dataset")
    common(g)
    g.add_argument("--out", required=True, help="output dataset directory")
    g.add_argument("--count", type=int, default=1900, help="total sample count")
    g.add_argument("--points", type=int, default=1024, help="points per cloud")
    g.add_argument("--image-w", type=int, default=64)
    g.add_argument("--image-h", type=int, default=48)
    g.add_argument("--no-jitter", action="store_true", help="disable point jitter")
    g.add_argument("--force", action="store_true", help="overwrite non-empty output")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit the tactile encoder")
    common(t)
    t.add_argument("--data", required=True, help="dataset directory")
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--embeddings", default="synthetic",
                   help="'synthetic' or a directory with text.tcle/image.tcle")
    t.add_argument("--checkpoint", default=None, help="resume from this checkpoint")
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--dim", type=int, default=64)
    t.add_argument("--holdout", type=int, default=0,
                   help="exclude this many samples from training")
    t.add_argument("--split-seed", type=int, default=DEFAULT_SPLIT_SEED)
    t.add_argument("--no-image-loss", action="store_true",
                   help="train with the text alignment term only")
    t.set_defaults(func=cmd_train)

    ez = sub.add_parser("eval-zeroshot", help="prompt-similarity classification")
    common(ez)
    ez.add_argument("--data", required=True)
    ez.add_argument("--out", required=True)
    ez.add_argument("--checkpoint", default=None)
    ez.add_argument("--embeddings", default="synthetic")
    ez.add_argument("--dim", type=int, default=64)
    ez.add_argument("--holdout", type=int, default=500)
    ez.add_argument("--split-seed", type=int, default=DEFAULT_SPLIT_SEED)
    ez.add_argument("--oracle-encoder", action="store_true",
                    help="use each sample's own text embedding (plumbing test)")
    ez.set_defaults(func=cmd_eval_zeroshot)

    ep = sub.add_parser("eval-probe", help="frozen-encoder MLP probing")
    common(ep)
    ep.add_argument("--data", required=True)
    ep.add_argument("--out", required=True)
    ep.add_argument("--checkpoint", required=True)
    ep.add_argument("--embeddings", default="synthetic")
    ep.add_argument("--dim", type=int, default=64)
    ep.add_argument("--holdout", type=int, default=500)
    ep.add_argument("--split-seed", type=int, default=DEFAULT_SPLIT_SEED)
    ep.add_argument("--dimension", default="all",
                    choices=("all",) + DIMENSIONS)
    ep.add_argument("--probe-epochs", type=int, default=20)
    ep.set_defaults(func=cmd_eval_probe)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(gc)
    gc.set_defaults(func=cmd_gradcheck)

    gd = sub.add_parser("grasp-demo", help="closed-loop grasp refinement episodes")
    common(gd)
    gd.add_argument("--out", required=True)
    gd.add_argument("--scenario", default="random", choices=("scripted", "random"))
    gd.add_argument("--episodes", type=int, default=20)
    gd.add_argument("--max-iters", type=int, default=10)
    gd.add_argument("--noise", type=float, default=0.2,
                    help="actuation noise half-range in mm")
    gd.add_argument("--reasoner-cmd", default=None,
                    help="external reasoner command (line protocol over stdio)")
    gd.set_defaults(func=cmd_grasp_demo)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    effective = list(sys.argv[1:]) if argv is None else list(argv)
    args = parser.parse_args(effective)
    _apply_config_file(args, effective)
    try:
        return args.func(args)
    except TacalignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
