"""Feature-map dumping from pretrained image-classification models.

The tensor written is the raw (T, C, H, W) float32 output of the requested
layer, one slice per frame. No reductions happen here; turning maps into
per-filter activation series is the analysis pipeline's job, so the
semantics live in exactly one place.
"""

import json
import os
from pathlib import Path

import cv2
import numpy as np
import torch
from torchvision import models as tv_models

from .job import JobError

# standard ImageNet preprocessing; recorded in the sidecar
_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

_BATCH = 16


def build_model(name, pretrained, seed=0):
    try:
        if pretrained:
            weights = tv_models.get_model_weights(name).DEFAULT
        else:
            weights = None
    except ValueError as exc:
        raise JobError(f"unknown model {name!r}: {exc}") from exc
    if not pretrained:
        torch.manual_seed(seed)
    try:
        model = tv_models.get_model(name, weights=weights)
    except ValueError as exc:
        raise JobError(f"unknown model {name!r}: {exc}") from exc
    model.eval()
    return model


def resolve_layer(model, layer_name):
    modules = dict(model.named_modules())
    if layer_name not in modules or layer_name == "":
        candidates = [n for n, _ in model.named_children()]
        raise JobError(
            f"unknown layer {layer_name!r}; top-level layers: {', '.join(candidates)}"
        )
    return modules[layer_name]


def _load_batch(paths):
    imgs = []
    for path in paths:
        bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
        if bgr is None:
            raise JobError(f"cannot read frame image {path}")
        rgb = cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0
        imgs.append((rgb - _MEAN) / _STD)
    stack = np.stack(imgs).transpose(0, 3, 1, 2)  # THWC -> TCHW
    return torch.from_numpy(np.ascontiguousarray(stack))


def extract_feature_maps(frame_paths, model_name, layer_name, out_path,
                         pretrained=False, seed=0):
    """Run every frame through the model and dump the layer's (T, C, H, W)
    float32 maps as .npy, with a JSON sidecar describing the run."""
    if not frame_paths:
        raise JobError("no frames to process")
    model = build_model(model_name, pretrained, seed=seed)
    layer = resolve_layer(model, layer_name)

    captured = []
    hook = layer.register_forward_hook(
        lambda mod, inp, out: captured.append(out.detach())
    )
    chunks = []
    try:
        with torch.no_grad():
            for start in range(0, len(frame_paths), _BATCH):
                batch = _load_batch(frame_paths[start : start + _BATCH])
                captured.clear()
                model(batch)
                if not captured:
                    raise JobError(f"layer {layer_name!r} did not fire during forward")
                maps = captured[-1]
                if maps.dim() != 4:
                    raise JobError(
                        f"layer {layer_name!r} output is {tuple(maps.shape)}, "
                        "expected (batch, C, H, W)"
                    )
                chunks.append(maps.to(torch.float32).cpu().numpy())
    finally:
        hook.remove()

    tensor = np.concatenate(chunks, axis=0)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = out_path.with_suffix(out_path.suffix + ".tmp")
    with open(tmp, "wb") as fh:  # np.save on a path would re-append .npy
        np.save(fh, tensor)
    os.replace(tmp, out_path)

    sidecar = out_path.with_suffix(".json")
    meta = {
        "model": model_name,
        "layer": layer_name,
        "pretrained": pretrained,
        "seed": seed,
        "frames": len(frame_paths),
        "channels": int(tensor.shape[1]),
        "map_hw": [int(tensor.shape[2]), int(tensor.shape[3])],
        "input_hw": [int(v) for v in _load_frame_shape(frame_paths[0])],
        "preprocessing": {
            "color": "RGB",
            "scale": "1/255",
            "mean": _MEAN.tolist(),
            "std": _STD.tolist(),
            "resize_interpolation": "area",
        },
        "dtype": "float32",
    }
    tmp = sidecar.with_suffix(".json.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, sidecar)
    return tensor, meta


def _load_frame_shape(path):
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise JobError(f"cannot read frame image {path}")
    return img.shape[0], img.shape[1]
