"""Job description files.

A job is a small INI file with a single [job] section:

    [job]
    video = clip.mp4          ; input video, any OpenCV-readable container
    tr_seconds = 1.0          ; scan sampling interval; one frame per window
    resize = 224x224          ; width x height fed to the network
    model = resnet18          ; torchvision image-classification model name
    layer = layer4            ; module whose output feature maps are dumped
    pretrained = false        ; true loads the default published weights
    seed = 0                  ; weight init seed when pretrained = false
    out_dir = out             ; all outputs land here

Relative paths resolve against the job file's directory.
"""

import configparser
from dataclasses import dataclass
from pathlib import Path


class JobError(Exception):
    """Anything wrong with a job description or its inputs."""


@dataclass
class Job:
    video: Path
    tr_seconds: float
    resize: tuple  # (width, height)
    model: str
    layer: str
    pretrained: bool
    seed: int
    out_dir: Path


def load_job(path):
    cp = configparser.ConfigParser()
    if not cp.read(path, encoding="utf-8"):
        raise JobError(f"job file not found: {path}")
    if "job" not in cp:
        raise JobError(f"{path}: missing [job] section")
    sec = cp["job"]
    root = Path(path).resolve().parent
    try:
        resize_raw = sec.get("resize", "224x224").lower()
        width, height = (int(v) for v in resize_raw.split("x"))
        job = Job(
            video=root / sec["video"],
            tr_seconds=sec.getfloat("tr_seconds", fallback=1.0),
            resize=(width, height),
            model=sec.get("model", "resnet18"),
            layer=sec.get("layer", "layer4"),
            pretrained=sec.getboolean("pretrained", fallback=False),
            seed=sec.getint("seed", fallback=0),
            out_dir=root / sec.get("out_dir", "out"),
        )
    except (KeyError, ValueError) as exc:
        raise JobError(f"{path}: {exc}") from exc
    if job.tr_seconds <= 0:
        raise JobError(f"{path}: tr_seconds must be positive")
    if min(job.resize) < 1:
        raise JobError(f"{path}: resize must be positive, got {resize_raw}")
    return job
