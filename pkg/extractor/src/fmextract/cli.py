"""Command line: run extraction jobs, inspect model layers."""

import argparse
import sys

from .features import build_model, extract_feature_maps
from .frames import extract_frames
from .job import JobError, load_job


def _cmd_run(args):
    job = load_job(args.job)
    frames_dir = job.out_dir / "frames"
    frame_paths = extract_frames(job.video, job.tr_seconds, job.resize, frames_dir)
    print(f"[fmextract] {len(frame_paths)} frames -> {frames_dir}")
    out_path = job.out_dir / f"{job.model}_{job.layer.replace('.', '_')}.npy"
    tensor, meta = extract_feature_maps(
        frame_paths, job.model, job.layer, out_path,
        pretrained=job.pretrained, seed=job.seed,
    )
    print(
        f"[fmextract] feature maps {tensor.shape} ({meta['dtype']}) -> {out_path}"
    )


def _cmd_frames(args):
    job = load_job(args.job)
    frames_dir = job.out_dir / "frames"
    frame_paths = extract_frames(job.video, job.tr_seconds, job.resize, frames_dir)
    print(f"[fmextract] {len(frame_paths)} frames -> {frames_dir}")


def _cmd_list_layers(args):
    model = build_model(args.model, pretrained=False)
    for name, module in model.named_modules():
        if name:
            print(f"{name}  ({type(module).__name__})")


def entrypoint(argv=None):
    parser = argparse.ArgumentParser(prog="fmextract", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="extract frames and feature maps per a job file")
    p_run.add_argument("job")
    p_run.set_defaults(fn=_cmd_run)

    p_frames = sub.add_parser("frames", help="extract frames only")
    p_frames.add_argument("job")
    p_frames.set_defaults(fn=_cmd_frames)

    p_layers = sub.add_parser("list-layers", help="print a model's module names")
    p_layers.add_argument("model")
    p_layers.set_defaults(fn=_cmd_list_layers)

    args = parser.parse_args(argv)
    try:
        args.fn(args)
    except JobError as exc:
        print(f"error [E_JOB]: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(entrypoint())
