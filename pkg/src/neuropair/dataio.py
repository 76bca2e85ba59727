"""Bit-exact interchange formats.

Tensors use the ``.npy`` version-1.0 layout so files interoperate with any
numpy-compatible tool:

    magic   6 bytes   b"\\x93NUMPY"
    version 2 bytes   major=1, minor=0
    hlen    u16 LE    length of the header text
    header  hlen bytes: a Python dict literal with keys 'descr',
            'fortran_order', 'shape', space-padded and newline-terminated so
            that 10 + hlen is a multiple of 64
    data    raw elements

Readers accept little-endian float32/float64 in C or Fortran order and widen
to float64; the writer always emits C-order float64, producing deterministic
bytes for a given array. Label tables are UTF-8 CSV with header
``id,description``. Manifests and run configs are INI-style key/value text.
"""

import ast
import configparser
import csv
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .matching import LabelTable

NPY_MAGIC = b"\x93NUMPY"

DATA_ROOT_ENV = "NEUROPAIR_DATA_ROOT"

_ACCEPTED_DESCR = ("<f8", "<f4")


# ---------------------------------------------------------------------------
# Tensor files
# ---------------------------------------------------------------------------

def write_tensor(path, array):
    """Write a 0-D to 4-D float array as canonical C-order float64 ``.npy``."""
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim > 4:
        raise InputError(f"tensors are limited to 4 axes, got {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise InputError("refusing to write non-finite values")
    header = (
        "{'descr': '<f8', 'fortran_order': False, "
        f"'shape': {str(arr.shape)}, }}"
    )
    pad = 64 - (10 + len(header) + 1) % 64
    header = header + " " * (pad % 64) + "\n"
    with open(path, "wb") as fh:
        fh.write(NPY_MAGIC)
        fh.write(bytes([1, 0]))
        fh.write(struct.pack("<H", len(header)))
        fh.write(header.encode("latin1"))
        fh.write(np.ascontiguousarray(arr).astype("<f8").tobytes(order="C"))


def _parse_npy_header(data, path):
    if len(data) < 10:
        raise FormatError(f"{path}: file shorter than a tensor header", offset=len(data))
    if data[:6] != NPY_MAGIC:
        raise FormatError(f"{path}: bad magic, not a tensor file", offset=0)
    major, minor = data[6], data[7]
    if (major, minor) != (1, 0):
        raise FormatError(
            f"{path}: unsupported tensor format version {major}.{minor}", offset=6
        )
    (hlen,) = struct.unpack("<H", data[8:10])
    if 10 + hlen > len(data):
        raise FormatError(f"{path}: truncated header", offset=10)
    try:
        header = ast.literal_eval(data[10 : 10 + hlen].decode("latin1").strip())
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"{path}: unparseable header ({exc})", offset=10) from exc
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise FormatError(f"{path}: header keys malformed", offset=10)
    descr = header["descr"]
    if descr not in _ACCEPTED_DESCR:
        raise FormatError(
            f"{path}: dtype {descr!r} not accepted (want one of {_ACCEPTED_DESCR})",
            offset=10,
        )
    shape = header["shape"]
    if not isinstance(shape, tuple) or not all(
        isinstance(d, int) and d >= 0 for d in shape
    ):
        raise FormatError(f"{path}: malformed shape {shape!r}", offset=10)
    if len(shape) > 4:
        raise FormatError(f"{path}: {len(shape)} axes exceed the 4-axis limit", offset=10)
    return shape, descr, bool(header["fortran_order"]), 10 + hlen


def read_tensor_header(path):
    """Validate a tensor file header without loading the data."""
    with open(path, "rb") as fh:
        prefix = fh.read(10)
        if len(prefix) == 10 and prefix[:6] == NPY_MAGIC:
            (hlen,) = struct.unpack("<H", prefix[8:10])
            prefix += fh.read(hlen)
    shape, descr, fortran, _ = _parse_npy_header(prefix, path)
    return shape, descr, fortran


def read_tensor(path):
    """Load a tensor file as a C-order float64 array, exactly as stored."""
    with open(path, "rb") as fh:
        data = fh.read()
    shape, descr, fortran, data_start = _parse_npy_header(data, path)
    itemsize = 8 if descr == "<f8" else 4
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    expected = data_start + count * itemsize
    if len(data) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes, file has {len(data)}",
            offset=min(len(data), expected),
        )
    flat = np.frombuffer(data[data_start:], dtype=descr)
    arr = flat.reshape(shape, order="F" if fortran else "C")
    # astype copies out of the read-only buffer and keeps 0-d shapes intact
    return arr.astype(np.float64, order="C")


# ---------------------------------------------------------------------------
# Label tables
# ---------------------------------------------------------------------------

def read_labels(path):
    """Load a ``id,description`` CSV into a LabelTable; ids must be unique."""
    labels = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty label file") from None
        if [h.strip().lower() for h in header] != ["id", "description"]:
            raise FormatError(f"{path}: header must be 'id,description', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"{path}: line {lineno}: expected 2 fields, got {len(row)}")
            try:
                neuron_id = int(row[0])
            except ValueError:
                raise FormatError(
                    f"{path}: line {lineno}: id {row[0]!r} is not an integer"
                ) from None
            if neuron_id in labels:
                raise FormatError(f"{path}: duplicate id {neuron_id}")
            labels[neuron_id] = row[1]
    return LabelTable(labels=labels)


def write_labels(table, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "description"])
        for neuron_id in sorted(table.labels):
            writer.writerow([neuron_id, table.labels[neuron_id]])


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

@dataclass
class ManifestSubject:
    subject_id: str
    path: Path
    split: str


@dataclass
class ManifestActivations:
    model: str
    layer: str
    path: Path
    kind: str  # "tensor" (T x C matrix) or "feature_maps" (T x C x H x W)


@dataclass
class Manifest:
    name: str
    tr_seconds: float
    subjects: list = field(default_factory=list)
    activations: list = field(default_factory=list)
    labels: dict = field(default_factory=dict)  # domain -> Path

    def split_counts(self):
        counts = {"train": 0, "val": 0, "test": 0}
        for s in self.subjects:
            counts[s.split] += 1
        return counts


def _resolve_root(manifest_path, data_root):
    if data_root is not None:
        return Path(data_root)
    env = os.environ.get(DATA_ROOT_ENV)
    if env:
        return Path(env)
    return Path(manifest_path).resolve().parent


def load_manifest(path, data_root=None):
    """Parse a manifest and fail fast: every referenced file must exist and
    every tensor header must validate before any computation starts."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    read = cp.read(path, encoding="utf-8")
    if not read:
        raise InputError(f"manifest not found: {path}")
    if "dataset" not in cp:
        raise FormatError(f"{path}: missing [dataset] section")
    root = _resolve_root(path, data_root)
    manifest = Manifest(
        name=cp["dataset"].get("name", ""),
        tr_seconds=cp["dataset"].getfloat("tr_seconds", fallback=1.0),
    )
    for section in cp.sections():
        if section.startswith("subject:"):
            subject_id = section.split(":", 1)[1]
            split = cp[section].get("split", "")
            if split not in ("train", "val", "test"):
                raise FormatError(
                    f"{path}: subject {subject_id!r} has invalid split {split!r}"
                )
            p = root / cp[section]["signal"]
            manifest.subjects.append(
                ManifestSubject(subject_id=subject_id, path=p, split=split)
            )
        elif section.startswith("activations:"):
            ident = section.split(":", 1)[1]
            model, _, layer = ident.partition("/")
            sec = cp[section]
            if "tensor" in sec:
                kind, rel = "tensor", sec["tensor"]
            elif "feature_maps" in sec:
                kind, rel = "feature_maps", sec["feature_maps"]
            else:
                raise FormatError(
                    f"{path}: section [{section}] needs 'tensor' or 'feature_maps'"
                )
            manifest.activations.append(
                ManifestActivations(model=model, layer=layer, path=root / rel, kind=kind)
            )
    if "labels" in cp:
        for domain, rel in cp["labels"].items():
            manifest.labels[domain] = root / rel

    for entry in manifest.subjects:
        if not entry.path.exists():
            raise InputError(f"{path}: missing signal file {entry.path}")
        read_tensor_header(entry.path)
    for entry in manifest.activations:
        if not entry.path.exists():
            raise InputError(f"{path}: missing activation file {entry.path}")
        read_tensor_header(entry.path)
    for domain, p in manifest.labels.items():
        if not p.exists():
            raise InputError(f"{path}: missing label table {p}")
    return manifest


def save_manifest(manifest, path, root=None):
    """Write a manifest with paths stored relative to ``root`` (default: the
    manifest's own directory)."""
    root = Path(root).resolve() if root is not None else Path(path).resolve().parent

    def rel(p):
        p = Path(p)
        try:
            return str(p.resolve().relative_to(root))
        except ValueError:
            return str(p)

    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["dataset"] = {"name": manifest.name, "tr_seconds": repr(manifest.tr_seconds)}
    if manifest.labels:
        cp["labels"] = {domain: rel(p) for domain, p in manifest.labels.items()}
    for s in manifest.subjects:
        cp[f"subject:{s.subject_id}"] = {"signal": rel(s.path), "split": s.split}
    for a in manifest.activations:
        cp[f"activations:{a.model}/{a.layer}"] = {a.kind: rel(a.path)}
    with open(path, "w", encoding="utf-8") as fh:
        cp.write(fh)


def load_subjects(manifest):
    """Read every subject's signal tensor into SubjectDataset records."""
    from .embedding import SubjectDataset

    return [
        SubjectDataset(
            subject_id=s.subject_id, signal=read_tensor(s.path), split=s.split
        )
        for s in manifest.subjects
    ]
