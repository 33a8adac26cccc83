"""Command-line interface: ``outerface <subcommand> [flags]``.

Exit status is 0 on success, 1 on a domain error and 2 on a usage error.
Every flag can also come from a ``--config`` file of ``key=value`` lines;
``section.key=value`` targets one subcommand, and flags on the command line win.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import OuterFaceError

log = logging.getLogger("outerface")

MASK_CHOICES = ["none", "eye", "hull", "unite", "inner"]


class UsageError(Exception):
    pass


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _emit(obj, out=None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _preprocessor(args):
    from .geometry import CropSpec, MaskSpec, MaskType
    from .pipeline import Preprocessor

    return Preprocessor(CropSpec(args.ratio, args.size), MaskSpec(MaskType(args.mask), args.k))


def _add_preprocess_flags(p, ratio=0.27, mask="inner"):
    p.add_argument("--mask", choices=MASK_CHOICES, default=mask, help="landmark mask type")
    p.add_argument("--k", type=int, default=13, help="disk radius for point-wise masks (pixels)")
    p.add_argument("--ratio", type=float, default=ratio, help="eye distance as a fraction of the crop size")
    p.add_argument("--size", type=int, default=112, help="crop side length (pixels)")


def _load_model_and_pre(path):
    from .embedding.checkpoint import load_model
    from .pipeline import Preprocessor

    model, extra = load_model(path)
    if "preprocessing" not in extra:
        raise UsageError(f"{path} does not record its preprocessing")
    return model, Preprocessor.from_dict(extra["preprocessing"])


# -- subcommands ------------------------------------------------------------

def cmd_synth_gen(args):
    from .corpus.synth import SynthFaceConfig, generate_synthetic_corpus

    cfg = SynthFaceConfig(n_identities=args.identities, images_per_identity=args.images_per_identity,
                          frames_per_video=args.frames_per_video, fake_fidelity=args.fidelity,
                          pose_jitter=args.pose_jitter, rng_seed=args.seed)
    manifest = generate_synthetic_corpus(cfg, args.out)
    _emit({"manifest": str(Path(args.out) / "manifest.jsonl"), "frames": len(manifest),
           "identities": cfg.n_identities, "seed": args.seed})


def cmd_train(args):
    from .corpus.manifest import Manifest
    from .embedding.checkpoint import save_model
    from .embedding.loss import LossConfig
    from .embedding.train import TrainSchedule
    from .workflow import train_from_manifest

    manifest = Manifest.load(args.manifest)
    drops = tuple(int(x) for x in args.lr_drops.split(",") if x.strip()) if args.lr_drops else ()
    schedule = TrainSchedule(epochs=args.epochs, batch_size=args.batch_size, base_lr=args.lr,
                             lr_drop_epochs=drops, rng_seed=args.seed, optimizer=args.optimizer,
                             momentum=args.momentum, weight_decay=args.weight_decay)
    run = train_from_manifest(manifest, _preprocessor(args), schedule, LossConfig(args.scale, args.margin),
                              embed_dim=args.embed_dim, model_seed=args.seed)
    save_model(run.model, args.out)
    log_path = Path(args.out).with_suffix(".train.csv")
    run.result.write_log(log_path)
    last = run.result.history[-1]
    _emit({"model": str(args.out), "train_log": str(log_path), "identities": len(run.identities),
           "frames_read": run.reads, "final_loss": last.mean_loss, "final_accuracy": last.train_accuracy,
           "seed": args.seed})


def cmd_verify(args):
    from .corpus.manifest import Manifest
    from .corpus.sampling import build_reference_pool
    from .geometry import LandmarkSet
    from .pipeline import load_image
    from .verification import ReferenceCandidate, ReferencePool, VerificationConfig, verify

    model, pre = _load_model_and_pre(args.model)
    refs = Manifest.load(args.refs_manifest)
    identity = args.identity
    if identity is None:
        ids = sorted({e.identity for e in refs.select(label="real", role="reference_candidate")})
        if len(ids) != 1:
            raise UsageError(f"--identity is required: the reference manifest holds {len(ids)} identities")
        identity = ids[0]
    entries = build_reference_pool(refs, identity, args.suspect_video or "", args.pool_size, seed=args.seed)
    cands = [ReferenceCandidate(e.frame_id, e.video_id, LandmarkSet.load(refs.resolve(e.landmarks_path)),
                                image_path=str(refs.resolve(e.image_path))) for e in entries]
    pool = ReferencePool(cands, args.strategy, args.ref_count, args.seed, args.suspect_video)
    suspect = (load_image(args.suspect), LandmarkSet.load(args.landmarks))
    result = verify(model, suspect, pool, VerificationConfig(args.tau, pre))
    _emit({**result.to_dict(), "tau": args.tau, "seed": args.seed})


def _evaluate(args, split):
    from .corpus.manifest import Manifest
    from .degradation import DegradationSpec
    from .evaluation.harness import EvalConfig, Evaluator

    model, pre = _load_model_and_pre(args.model)
    manifest = Manifest.load(args.manifest)
    cfg = EvalConfig(split=split, strategy=args.strategy, ref_count=args.ref_count, pool_size=args.pool_size,
                     n_per_class=args.n_per_class, seed=args.seed,
                     degradation=DegradationSpec.parse(args.degrade),
                     degrade_references=not args.clean_references)
    return Evaluator(model, manifest, pre).run(cfg), cfg, manifest


def cmd_evaluate(args):
    from .evaluation.harness import SCORE_CONVENTION, audit_pools
    from .evaluation.metrics import accuracy_at_threshold
    from .evaluation.plots import write_roc

    result, cfg, manifest = _evaluate(args, args.split)
    problems = audit_pools(manifest, result.pools)
    if problems:
        raise OuterFaceError(f"reference pool audit failed: {problems[0]}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_roc(result.roc, out / "roc.csv", out / "roc.svg")
    with open(out / "scores.csv", "w", encoding="utf-8") as fh:
        fh.write("frame_id,identity,video_id,label,score\n")
        for f in result.frames:
            fh.write(f"{f.frame_id},{f.identity},{f.video_id},{'fake' if f.is_fake else 'real'},{f.score!r}\n")
    with open(out / "pools.jsonl", "w", encoding="utf-8") as fh:
        for r in result.pools:
            fh.write(json.dumps(r.__dict__, sort_keys=True) + "\n")
    report = {
        "auc": result.roc.auc,
        "n_real": result.roc.n_real,
        "n_fake": result.roc.n_fake,
        "curve_csv_path": "roc.csv",
        "score_convention": SCORE_CONVENTION,
        "small_pools": result.small_pools,
        "config_echo": {**cfg.echo(), "model_sha256": _sha256(args.model),
                        "manifest_sha256": _sha256(args.manifest)},
    }
    if args.tau is not None:
        per_video, overall = accuracy_at_threshold(result.frames, args.tau)
        report["accuracy"] = {"tau": args.tau, "mean_video_accuracy": overall, "videos": len(per_video)}
    _emit(report, out / "report.json")


def _read_scores(path):
    from .evaluation.metrics import ScoredFrame

    frames = []
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].split(",")[:5] != ["frame_id", "identity", "video_id", "label", "score"]:
        raise UsageError(f"{path}: expected a scores CSV written by `evaluate`")
    for line in lines[1:]:
        fid, ident, vid, label, score = line.split(",")
        frames.append(ScoredFrame(fid, ident, vid, label == "fake", float(score)))
    return frames


def cmd_calibrate_threshold(args):
    from .evaluation.metrics import accuracy_at_threshold, youden_threshold

    if args.scores:
        frames = _read_scores(args.scores)
    elif args.model and args.manifest:
        frames = _evaluate(args, args.split)[0].frames
    else:
        raise UsageError("give --scores, or --model with --manifest")
    tau, j = youden_threshold([f.is_fake for f in frames], [f.score for f in frames])
    _emit({"tau": tau, "youden_j": j, "mean_video_accuracy": accuracy_at_threshold(frames, tau)[1],
           "frames": len(frames), "seed": args.seed})


def cmd_degrade(args):
    from .corpus.manifest import Manifest
    from .degradation import DegradationSpec, degrade
    from .pipeline import load_image, save_image
    from .seeding import sub_seed

    kinds = {"jpeg": f"jpeg:{args.quality}", "resize": f"resize:{args.factor}",
             "noise": f"noise:{args.sigma!r}:{args.seed}"}
    spec = DegradationSpec.parse(kinds[args.kind])
    src = Path(args.inp)
    if src.suffix != ".jsonl":
        out = degrade(load_image(src), spec)
        save_image(out.pixels, args.out)
        _emit({"out": str(args.out), "degradation": spec.label(), "seed": args.seed})
        return
    manifest = Manifest.load(src)
    out_dir = Path(args.out)

    def frame_spec(e):
        return spec.with_seed(sub_seed(args.seed, e.frame_id)) if args.kind == "noise" else spec
    entries = []
    for e in manifest:  # reference candidates too: the tree stands for a degraded dataset
        target = out_dir / e.image_path
        target.parent.mkdir(parents=True, exist_ok=True)
        save_image(degrade(load_image(manifest.resolve(e.image_path)), frame_spec(e)).pixels, target)
        lm_target = out_dir / e.landmarks_path
        lm_target.parent.mkdir(parents=True, exist_ok=True)
        lm_target.write_bytes(manifest.resolve(e.landmarks_path).read_bytes())
        entries.append(e)
    Manifest(entries, out_dir).save(out_dir / "manifest.jsonl")
    _emit({"manifest": str(out_dir / "manifest.jsonl"), "degraded": len(entries),
           "degradation": spec.label(), "seed": args.seed})


def cmd_mask_preview(args):
    from PIL import Image

    from .geometry import LandmarkSet
    from .pipeline import load_image, save_image

    pre = _preprocessor(args)
    image, lm = load_image(args.image), LandmarkSet.load(args.landmarks)
    mask = pre.mask_for(pre.crop_face(image, lm)[1])
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(args.out)
    out = {"out": str(args.out), "masked_pixels": int(mask.sum()), "preprocessing": pre.to_dict()}
    if args.crop_out:
        save_image(pre(image, lm), args.crop_out)
        out["crop"] = str(args.crop_out)
    _emit(out)


def cmd_saliency(args):
    from .evaluation.plots import write_saliency
    from .evaluation.saliency import occlusion_saliency
    from .geometry import LandmarkSet
    from .pipeline import load_image

    model, pre = _load_model_and_pre(args.model)
    image, lm = load_image(args.image), LandmarkSet.load(args.landmarks)
    crop = pre(image, lm)
    mask = pre.mask_for(pre.crop_face(image, lm)[1])
    ref = None
    if args.reference:
        if not args.reference_landmarks:
            raise UsageError("--reference needs --reference-landmarks")
        ref = model.embed(pre(load_image(args.reference), LandmarkSet.load(args.reference_landmarks)))
    smap = occlusion_saliency(model, crop, ref, args.patch, args.stride, args.fill, mask)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path, svg_path = prefix.with_suffix(".csv"), prefix.with_suffix(".svg")
    write_saliency(smap, csv_path, svg_path, image=crop)
    peak = np.unravel_index(int(np.argmax(smap.values)), smap.values.shape)
    _emit({"csv": str(csv_path), "svg": str(svg_path), "grid": list(smap.values.shape),
           "peak_cell": [int(peak[0]), int(peak[1])], "peak_value": float(smap.values.max())})


def cmd_sample_frames(args):
    from .corpus.manifest import Manifest
    from .corpus.sampling import sample_frames

    frames = sample_frames(Manifest.load(args.manifest), args.n_per_class, seed=args.seed, split=args.split)
    _emit({"split": args.split, "n_per_class": args.n_per_class, "seed": args.seed,
           "frames": [e.frame_id for e in frames]}, args.out)


def cmd_model_info(args):
    from .embedding.checkpoint import read_header

    _emit({**read_header(args.model), "sha256": _sha256(args.model)})


def cmd_pool_audit(args):
    from .corpus.manifest import Manifest
    from .evaluation.harness import PoolRecord, audit_pools

    manifest = Manifest.load(args.manifest)
    records = [PoolRecord(**json.loads(line)) for line in Path(args.pools).read_text().splitlines() if line]
    problems = audit_pools(manifest, records)
    _emit({"records": len(records), "problems": problems[:20], "ok": not problems})
    if problems:
        raise OuterFaceError(f"{len(problems)} pool audit problems")


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file (section.key=value per subcommand)")
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--threads", type=int, default=None, help="cap BLAS threads")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="outerface", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("synth-gen", cmd_synth_gen, "render the synthetic face corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--identities", type=int, default=200)
    p.add_argument("--images-per-identity", type=int, default=20)
    p.add_argument("--frames-per-video", type=int, default=2)
    p.add_argument("--fidelity", type=float, default=1.0)
    p.add_argument("--pose-jitter", type=float, default=1.0)

    p = add("train", cmd_train, "train an embedding model on a manifest's real train frames")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    _add_preprocess_flags(p)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    p.add_argument("--lr", type=float, default=0.003)
    p.add_argument("--lr-drops", default="6,8", help="comma-separated epochs where the rate drops 10x")
    p.add_argument("--momentum", type=float, default=0.9, help="SGD momentum")
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--scale", type=float, default=16.0, help="margin-softmax scale s")
    p.add_argument("--margin", type=float, default=0.1, help="additive angular margin m (radians)")

    def eval_flags(p):
        p.add_argument("--strategy", choices=["random", "nearest", "farthest"], default="random")
        p.add_argument("--ref-count", type=int, default=1)
        p.add_argument("--pool-size", type=int, default=100)

    p = add("verify", cmd_verify, "verify one suspect frame against reference images")
    p.add_argument("--model", required=True)
    p.add_argument("--suspect", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--refs-manifest", required=True)
    p.add_argument("--identity", help="claimed identity (required if the manifest holds several)")
    p.add_argument("--suspect-video", help="excluded from the reference pool")
    p.add_argument("--tau", type=float, default=0.5)
    eval_flags(p)

    p = add("evaluate", cmd_evaluate, "score a split and write report.json, ROC CSV/SVG")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--n-per-class", type=int, default=None)
    p.add_argument("--degrade", default="none", help="none | jpeg:Q | resize:F | noise:SIGMA[:SEED] | external:DIR")
    p.add_argument("--clean-references", action="store_true", help="degrade suspects only, keep references clean")
    p.add_argument("--tau", type=float, default=None, help="also report per-video accuracy at this threshold")
    p.add_argument("--out", default="report")
    eval_flags(p)

    p = add("calibrate-threshold", cmd_calibrate_threshold, "pick tau by Youden's J on a validation split")
    p.add_argument("--scores", help="scores.csv written by evaluate")
    p.add_argument("--model")
    p.add_argument("--manifest")
    p.add_argument("--split", default="val", choices=["train", "val", "test"])
    p.add_argument("--n-per-class", type=int, default=None)
    p.add_argument("--degrade", default="none")
    eval_flags(p)

    p = add("degrade", cmd_degrade, "degrade an image, or every frame of a manifest")
    p.add_argument("--in", dest="inp", required=True, help="image file or manifest.jsonl")
    p.add_argument("--out", required=True, help="output image, or output directory for a manifest")
    p.add_argument("--kind", choices=["jpeg", "resize", "noise"], required=True)
    p.add_argument("--quality", type=int, default=20)
    p.add_argument("--factor", type=int, default=4)
    p.add_argument("--sigma", type=float, default=5.0)

    p = add("mask-preview", cmd_mask_preview, "write the crop-space mask as a grayscale PNG (255 = masked)")
    p.add_argument("--image", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--crop-out", help="also write the aligned, masked crop here")
    _add_preprocess_flags(p)

    p = add("saliency", cmd_saliency, "occlusion saliency map as CSV + SVG")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--reference")
    p.add_argument("--reference-landmarks")
    p.add_argument("--patch", type=int, default=16)
    p.add_argument("--stride", type=int, default=8)
    p.add_argument("--fill", type=float, default=0.0)
    p.add_argument("--out", default="saliency", help="output prefix")

    p = add("sample-frames", cmd_sample_frames, "identity-even sample of suspect frames")
    p.add_argument("--manifest", required=True)
    p.add_argument("--n-per-class", type=int, required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--out")

    p = add("model-info", cmd_model_info, "print a checkpoint's header")
    p.add_argument("--model", required=True)

    p = add("pool-audit", cmd_pool_audit, "check evaluation pools never share the suspect's video")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pools", required=True, help="pools.jsonl written by evaluate")
    return parser


def read_config(path) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"--config {path}:{lineno}: expected key=value")
        out[key.strip()] = value.strip().strip('"')
    return out


def _apply_config(parser, argv) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices
    for key, value in read_config(known.config).items():
        section, _, name = key.rpartition(".")
        dest = name.replace("-", "_")
        if section and section not in subparsers:
            raise UsageError(f"--config: unknown section {section!r}")
        targets = [subparsers[section]] if section else list(subparsers.values())
        hit = False
        for sp in targets:
            for action in sp._actions:
                if action.dest == dest or (dest == "in" and action.dest == "inp"):
                    action.default = value  # argparse applies the type to string defaults
                    action.required = False
                    hit = True
        if not hit:
            raise UsageError(f"--config: unknown key {key!r}")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"outerface: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                args.func(args)
        else:
            args.func(args)
    except OuterFaceError as exc:
        print(f"outerface: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except UsageError as exc:
        print(f"outerface {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"outerface {args.command}: invalid value: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
