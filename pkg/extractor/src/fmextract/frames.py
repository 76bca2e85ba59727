"""Frame sampling: the last video frame inside every scan window.

Window k covers [k * TR, (k+1) * TR); its representative image is the last
frame whose interval starts before the window ends. Only complete windows
produce frames, so a 10 s clip at TR=1 yields exactly 10 images.
"""

import csv
import math
import os
from pathlib import Path

import cv2

from .job import JobError


def window_frame_indices(total_frames, fps, tr_seconds):
    """0-based source-frame index of the last frame in each full TR window."""
    frames_per_window = tr_seconds * fps
    n_windows = int(math.floor(total_frames / frames_per_window + 1e-9))
    indices = []
    for k in range(n_windows):
        idx = int(math.ceil((k + 1) * frames_per_window - 1e-9)) - 1
        indices.append(min(idx, total_frames - 1))
    return indices


def extract_frames(video_path, tr_seconds, resize, out_dir):
    """Decode the video and write one PNG per scan window plus an index CSV.

    Returns the list of written frame paths.
    """
    cap = cv2.VideoCapture(str(video_path))
    if not cap.isOpened():
        raise JobError(f"cannot open video {video_path}")
    fps = cap.get(cv2.CAP_PROP_FPS)
    total = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
    if fps <= 0 or total <= 0:
        cap.release()
        raise JobError(f"{video_path}: unreadable frame rate or length")
    targets = window_frame_indices(total, fps, tr_seconds)
    if not targets:
        cap.release()
        raise JobError(
            f"{video_path}: shorter than one {tr_seconds}s window"
        )
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    wanted = set(targets)
    grabbed = {}
    frame_idx = 0
    while frame_idx <= max(targets):
        ok, frame = cap.read()
        if not ok:
            break
        if frame_idx in wanted:
            grabbed[frame_idx] = cv2.resize(frame, resize, interpolation=cv2.INTER_AREA)
        frame_idx += 1
    cap.release()
    missing = [t for t in targets if t not in grabbed]
    if missing:
        raise JobError(f"{video_path}: could not decode frames {missing}")

    paths = []
    rows = []
    for timepoint, src_idx in enumerate(targets):
        name = f"frame_{timepoint:05d}.png"
        path = out_dir / name
        tmp = out_dir / f".tmp_{name}"  # imwrite picks the codec from the suffix
        if not cv2.imwrite(str(tmp), grabbed[src_idx]):
            raise JobError(f"failed to write {path}")
        os.replace(tmp, path)
        paths.append(path)
        rows.append((timepoint, src_idx, (src_idx + 1) / fps, name))

    index_path = out_dir / "frame_index.csv"
    tmp = out_dir / "frame_index.csv.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timepoint", "source_frame", "timestamp_seconds", "file"])
        for timepoint, src_idx, ts, name in rows:
            writer.writerow([timepoint, src_idx, f"{ts:.6f}", name])
    os.replace(tmp, index_path)
    return paths
