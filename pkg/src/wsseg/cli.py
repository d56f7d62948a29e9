"""``wsseg`` command line: cam, losses, pseudo, refine, eval, synth, gradcheck."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields

import yaml

from . import commands
from .config import load_config
from .errors import InvalidArgumentError
from .manifest import load_manifest
from .metrics import PRED_IGNORE_POLICIES
from .relation import TERMS
from .synth import SynthSpec

log = logging.getLogger("wsseg")


def _common(p, manifest=True, config=True, jobs=True, out_required=True):
    if manifest:
        p.add_argument("--manifest", required=True, help="dataset manifest (JSON)")
    p.add_argument("--out", required=out_required, help="output directory")
    if config:
        p.add_argument("--config", help="YAML/JSON key-value configuration overriding the manifest")
    if jobs:
        p.add_argument("--jobs", type=int, default=1, help="worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wsseg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cam", help="write normalized CAM tensors")
    _common(p, config=False)

    p = sub.add_parser("losses", help="per-image loss breakdown report")
    _common(p)
    p.add_argument("--figures", action="store_true", help="also render losses.png")

    p = sub.add_parser("pseudo", help="write initial pseudo-label maps")
    _common(p)
    p.add_argument("--cams", help="directory of CAM tensors from `cam` (default: compute from attention)")

    p = sub.add_parser("refine", help="object-guided refinement of predicted label maps")
    _common(p)
    p.add_argument("--pred", required=True, help="directory of predicted label maps")
    p.add_argument("--initial", required=True, help="directory of initial pseudo labels")

    p = sub.add_parser("eval", help="mIoU of predicted label maps against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--num-classes", type=int, help="foreground class count C")
    p.add_argument("--manifest", help="read C from this manifest instead of --num-classes")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--pred-ignore", choices=PRED_IGNORE_POLICIES, default="error",
                   help="'miss' scores 255 predictions as wrong instead of rejecting them")
    p.add_argument("--figures", action="store_true", help="also render iou.png")

    p = sub.add_parser("synth", help="write a seeded synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spec", help="YAML/JSON document of generator fields")
    for f in fields(SynthSpec):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name,
                       type=type(f.default), default=None)

    p = sub.add_parser("gradcheck", help="finite-difference check of the loss gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--out", help="write gradcheck.jsonl here")
    p.add_argument("--inject-fault", choices=TERMS, default=None,
                   help="test hook: flip the sign of one analytic term gradient")
    p.add_argument("--figures", action="store_true")
    return parser


def _manifest_and_config(args):
    manifest = load_manifest(args.manifest)
    config = load_config(getattr(args, "config", None), base=manifest.config)
    return manifest, config


def _synth_spec(args) -> SynthSpec:
    doc = {}
    if args.spec:
        doc = yaml.safe_load(open(args.spec)) or {}
        if not isinstance(doc, dict):
            raise InvalidArgumentError("synth spec must be a mapping")
    for f in fields(SynthSpec):
        v = getattr(args, f.name)
        if v is not None:
            doc[f.name] = v
    return SynthSpec.from_dict(doc)


def run(args) -> int:
    cmd = args.command
    if cmd == "synth":
        return commands.cmd_synth(args.out, args.seed, _synth_spec(args))
    if cmd == "gradcheck":
        return commands.cmd_gradcheck(args.seed, args.trials, args.out, args.inject_fault, args.figures)
    if cmd == "eval":
        C = args.num_classes
        if C is None:
            if not args.manifest:
                raise InvalidArgumentError("eval needs --num-classes or --manifest")
            C = load_manifest(args.manifest).num_classes
        return commands.cmd_eval(args.pred, args.gt, C, args.out, args.pred_ignore, args.jobs,
                                 args.figures)
    manifest, config = _manifest_and_config(args)
    if cmd == "cam":
        return commands.cmd_cam(manifest, args.out, args.jobs)
    if cmd == "losses":
        return commands.cmd_losses(manifest, config, args.out, args.jobs, args.figures)
    if cmd == "pseudo":
        return commands.cmd_pseudo(manifest, config, args.out, args.cams, args.jobs)
    if cmd == "refine":
        return commands.cmd_refine(manifest, args.pred, args.initial, args.out, config, args.jobs)
    raise AssertionError(cmd)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except InvalidArgumentError as exc:
        problems = getattr(exc, "problems", [str(exc)])
        print(json.dumps({"error": type(exc).__name__, "problems": problems}), file=sys.stderr)
        return commands.EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
