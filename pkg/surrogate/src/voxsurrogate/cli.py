"""Command-line interface: train and saliency subcommands.

Training flags mirror TrainSpec; outputs are a metrics JSON and a model
checkpoint.  Saliency writes raw f32 volumes with JSON sidecars.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import data, saliency as sg, train as tr
from .model import ModelSpec, build


def cmd_train(args) -> int:
    dataset = data.VoxelSampleSet.from_directory(args.data_dir)
    size = dataset.volumes.shape[1]
    model = build(ModelSpec(input_size=size, seed=args.seed))
    spec = tr.TrainSpec(
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        split=tuple(args.split),
        seed=args.seed,
    )
    print(f"{len(dataset)} samples of {size}^3; {model.parameter_count()} parameters")
    metrics = tr.train(
        model, dataset, spec,
        log=lambda e, c: print(f"epoch {e}: train_loss {c['train_loss'][-1]:.5f}"),
    )
    metrics["parameter_count"] = model.parameter_count()
    metrics["model_spec"] = model.spec.metadata
    tr.save_metrics(metrics, args.metrics)
    tr.save_checkpoint(model, args.checkpoint)
    print(f"R2: {metrics['R2']}")
    print(f"wrote {args.metrics} and {args.checkpoint}")
    return 0


def cmd_saliency(args) -> int:
    model = tr.load_checkpoint(args.checkpoint)
    os.makedirs(args.out_dir, exist_ok=True)
    stems = data.discover(args.data_dir)
    if args.limit:
        stems = stems[: args.limit]
    for stem in stems:
        vol, _ = data.read_sample(stem)
        for t, name in enumerate(data.TARGET_KEYS):
            sal = sg.smoothgrad(
                model, vol, t,
                copies=args.copies,
                sigma=args.sigma,
                noise_as_range_fraction=args.range_fraction,
                seed=args.seed,
            )
            out_stem = os.path.join(
                args.out_dir, f"{os.path.basename(stem)}_{name}"
            )
            sg.save_saliency(sal, out_stem, extra={"target": name, "source": stem})
    print(f"wrote saliency volumes for {len(stems)} samples to {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voxsurrogate", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit the surrogate on exported tensors")
    t.add_argument("--data-dir", required=True)
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--learning-rate", type=float, default=1e-3)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--split", type=float, nargs=3, default=[0.8, 0.1, 0.1])
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--metrics", default="metrics.json")
    t.add_argument("--checkpoint", default="surrogate.pt")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("saliency", help="SmoothGrad volumes for samples")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data-dir", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--copies", type=int, default=50)
    s.add_argument("--sigma", type=float, default=sg.DEFAULT_SIGMA)
    s.add_argument("--range-fraction", action="store_true")
    s.add_argument("--limit", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_saliency)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
