"""``csiaug`` command line entry point."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .container import CsiDataset, read_csit, reader_for, write_csit
from .csi_core import build_csi_image
from .device import default_device
from .errors import CsiaugError
from .harness import SCENARIOS, ExperimentPlan, load_plan, report, run_scenario
from .harness.experiment import directory_lock, load_dataset, normalized
from .harness.presets import PRESETS, preset
from .harness.splits import apply_imbalance, split_dataset

log = logging.getLogger("csiaug")


def _plan(args) -> ExperimentPlan:
    if args.config:
        plan = load_plan(args.config)
        if args.seed is not None:
            plan = plan.with_seed(args.seed)
    else:
        plan = preset(args.preset, args.seed)
    if getattr(args, "scenario", None):
        plan = plan.with_scenario(args.scenario)
    return plan


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> None:
    plan = _plan(args)
    ds = load_dataset(ExperimentPlan(**{**plan.to_dict(), "dataset_path": None}))
    path = write_csit(_out(args) / "synthetic.csit", ds)
    print(f"wrote {len(ds)} samples {ds.image_shape} to {path}")


def cmd_preprocess(args) -> None:
    """Each input is LABEL=PATH; a capture becomes one image per n_frames window."""
    images = []
    for item in args.inputs:
        label, _, path = item.partition("=")
        if not path:
            raise CsiaugError(f"expected LABEL=PATH, got {item!r}")
        frames = list(reader_for(path).read(path))
        for start in range(0, len(frames) - args.frames + 1, args.frames):
            images.append(build_csi_image(frames[start:start + args.frames], tuple(args.antenna_pair),
                                          label=int(label), n_frames=args.frames))
    if not images:
        raise CsiaugError("no complete frame windows in the inputs")
    num_classes = args.num_classes or max(im.label for im in images) + 1
    ds = CsiDataset.from_images(images, num_classes,
                                sample_ids=[f"real-{i:06d}" for i in range(len(images))])
    path = write_csit(_out(args) / "dataset.csit", ds)
    print(f"wrote {len(ds)} images to {path}")


def _prepared_train(plan: ExperimentPlan):
    ds = load_dataset(plan)
    train, test = split_dataset(ds, plan)
    if plan.scenario != "balanced":
        train = apply_imbalance(train, plan)
    train, (test,), _ = normalized(train, [test])
    return train, test


def cmd_train_diffusion(args) -> None:
    from .diffusion import train_diffusion, write_losses_csv

    plan = _plan(args)
    if not args.scenario:
        plan = plan.with_scenario("imbalanced")
    with directory_lock(_out(args)) as out:
        train, _ = _prepared_train(plan)
        cfg = plan.diffusion_config(train.image_shape)
        # train_diffusion leaves a resumable diffusion.npz in checkpoint_dir
        run = train_diffusion(cfg, train.data, train.labels, checkpoint_dir=out,
                              resume_from=args.resume, device=default_device())
        write_losses_csv(out / "losses.csv", run.losses)
    print(f"trained {run.step} steps, final window loss {run.losses[-1][1] if run.losses else float('nan'):.4f}")


def cmd_sample(args) -> None:
    from .diffusion import generate, load_diffusion

    run = load_diffusion(args.checkpoint, device=default_device())
    gen = torch.Generator().manual_seed(args.seed or 0)
    x = generate(run.model, args.label, args.n, run.schedule, gen,
                 guidance_scale=run.config.guidance_scale).cpu().numpy()
    ds = CsiDataset(x, np.full(args.n, args.label), run.config.num_classes, ["generated"] * args.n,
                    [f"gen-c{args.label:02d}-{i:05d}" for i in range(args.n)])
    path = write_csit(_out(args) / "generated.csit", ds)
    print(f"wrote {args.n} samples of class {args.label} to {path}")


def cmd_train_classifier(args) -> None:
    from .diffusion import write_losses_csv
    from .vit import ViTConfig, plot_confusion, save_classifier, train_classifier

    train, test = read_csit(args.train), read_csit(args.test)
    overrides = {}
    if args.config:
        overrides = json.loads(Path(args.config).read_text()).get("classifier", {})
    cfg = ViTConfig.from_dict({"num_classes": train.num_classes, "input_shape": train.image_shape,
                               "seed": args.seed or 0, **overrides})
    with directory_lock(_out(args)) as out:
        trained = train_classifier(cfg, train.data, train.labels, test.data, test.labels, device=default_device())
        save_classifier(out / "classifier.npz", trained)
        write_losses_csv(out / "losses.csv", list(enumerate(trained.epoch_losses, start=1)))
        trained.metrics.write_json(out / "metrics.json")
        plot_confusion(trained.metrics, out / "confusion.png")
    print(f"overall accuracy {100 * trained.metrics.overall_accuracy:.2f}%")


def cmd_run(args) -> None:
    plan = _plan(args)
    out = _out(args)
    scenarios = [args.scenario] if args.scenario else list(SCENARIOS)
    ds = load_dataset(plan)
    for name in scenarios:
        manifest, metrics = run_scenario(plan.with_scenario(name), out / name, ds)
        minority = manifest.summary["minority_accuracy"]
        print(f"{name:>10}: overall {100 * metrics.overall_accuracy:6.2f}%"
              + ("" if minority is None else f"  minority {100 * minority:6.2f}%"))


def cmd_report(args) -> None:
    written = report(args.manifests, _out(args))
    print(Path(written["txt"]).read_text(), end="")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csiaug", description=__doc__)
    p.add_argument("--version", action="version", version=f"csiaug {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        sp.add_argument("--config", help="experiment plan JSON")
        sp.add_argument("--preset", default="desk", choices=sorted(PRESETS), help="plan used without --config")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="overrides split, train and generation seeds")
        if scenario:
            sp.add_argument("--scenario", choices=SCENARIOS)
        return sp

    common(sub.add_parser("synth", help="write a synthetic dataset"), scenario=False).set_defaults(fn=cmd_synth)

    sp = sub.add_parser("preprocess", help="turn raw CSI captures into a .csit dataset")
    sp.add_argument("inputs", nargs="+", metavar="LABEL=PATH")
    sp.add_argument("--out", required=True)
    sp.add_argument("--frames", type=int, default=256, help="frames per image")
    sp.add_argument("--antenna-pair", type=int, nargs=2, default=(0, 3))
    sp.add_argument("--num-classes", type=int)
    sp.set_defaults(fn=cmd_preprocess)

    sp = common(sub.add_parser("train-diffusion", help="train the conditional denoiser"))
    sp.add_argument("--resume", help="checkpoint to continue from")
    sp.set_defaults(fn=cmd_train_diffusion)

    sp = sub.add_parser("sample", help="generate class-conditioned samples")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--label", type=int, required=True)
    sp.add_argument("--n", type=int, default=16)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(fn=cmd_sample)

    sp = sub.add_parser("train-classifier", help="train and evaluate the classifier on .csit splits")
    sp.add_argument("--train", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--config", help="JSON whose 'classifier' object overrides defaults")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(fn=cmd_train_classifier)

    common(sub.add_parser("run", help="run one or all scenarios")).set_defaults(fn=cmd_run)

    sp = sub.add_parser("report", help="compare scenario runs")
    sp.add_argument("manifests", nargs="+")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.fn(args)
    except CsiaugError as exc:
        print(f"csiaug {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
