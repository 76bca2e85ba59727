"""Brain-signal embedding model: a shared linear transform into m networks,
an optional temporal module (LSTM stack or self-attention block), and a
mirrored decoder, trained unsupervised by mean-squared reconstruction error.

The encoder transform is a single matrix shared across all subjects, so the
per-network temporal activations live in one comparable latent space. The
decoder mirrors the encoder structure but owns its weights.

Checkpoint container (binary, little-endian, documented byte-level):

    magic   4 bytes  b"NPEC"
    version u32      currently 1
    hlen    u32      length of the UTF-8 JSON config that follows
    config  hlen bytes
    count   u32      number of parameter records, sorted by name
    record  u16 name length | name UTF-8 | u8 ndim | ndim x u64 dims
            | float64 C-order data

Identical models serialize to identical bytes.
"""

import json
import math
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .errors import FormatError, InputError, NumericError, ShapeError
from .numerics import (
    AdamState,
    LstmParams,
    MsaParams,
    adam_step,
    init_lstm_params,
    init_msa_params,
    linear_backward,
    linear_forward,
    lstm_backward,
    lstm_forward,
    msa_backward,
    msa_forward,
)

VARIANTS = ("lt", "lt_lstm", "lt_msa")

SPLITS = ("train", "val", "test")

CHECKPOINT_MAGIC = b"NPEC"
CHECKPOINT_VERSION = 1


@dataclass
class EmbeddingConfig:
    n_voxels: int
    n_networks: int = 64
    variant: str = "lt"
    lr: float = 0.01
    epochs: int = 100
    batch_size: int = 16
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 42
    lstm_layers: int = 2
    msa_heads: int = 4
    msa_positional: bool = True
    msa_residual: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InputError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0 < self.n_networks <= self.n_voxels:
            raise InputError(
                f"need 0 < networks <= voxels, got {self.n_networks} vs {self.n_voxels}"
            )
        if self.epochs < 1 or self.batch_size < 1:
            raise InputError("epochs and batch size must be >= 1")
        if self.lr <= 0:
            raise InputError("learning rate must be positive")


@dataclass(eq=False)
class SubjectDataset:
    subject_id: str
    signal: np.ndarray  # (t, n), z-normalized per voxel column
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise InputError(f"split must be one of {SPLITS}, got {self.split!r}")


def znormalize(raw):
    """Z-score each column to mean 0, population std 1.

    Columns with std below 1e-12 become all-zero; their indices are returned
    alongside the matrix so the voxel<->coordinate mapping stays intact.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise ShapeError(f"signal matrix must be 2-D, got {raw.shape}")
    if raw.shape[0] < 2:
        raise InputError(f"need at least 2 time points, got {raw.shape[0]}")
    mean = raw.mean(axis=0)
    centered = raw - mean
    std = np.sqrt((centered * centered).mean(axis=0))
    dead = std < 1e-12
    out = centered / np.where(dead, 1.0, std)
    out[:, dead] = 0.0
    return out, np.flatnonzero(dead)


class EmbeddingModel:
    """Encoder (w, temporal module) plus mirrored decoder (temporal, w_dec)."""

    def __init__(self, config, w, w_dec, enc_temporal, dec_temporal):
        self.config = config
        self.w = w
        self.w_dec = w_dec
        self.enc_temporal = enc_temporal
        self.dec_temporal = dec_temporal

    @classmethod
    def initialize(cls, config):
        rng = np.random.default_rng(config.seed)
        n, m = config.n_voxels, config.n_networks
        w = rng.uniform(-1, 1, (n, m)) / math.sqrt(n)
        w_dec = rng.uniform(-1, 1, (m, n)) / math.sqrt(m)
        enc_t = dec_t = None
        if config.variant == "lt_lstm":
            enc_t = init_lstm_params(m, m, config.lstm_layers, rng)
            dec_t = init_lstm_params(m, m, config.lstm_layers, rng)
        elif config.variant == "lt_msa":
            enc_t = init_msa_params(
                m, config.msa_heads, rng,
                use_positional=config.msa_positional,
                residual=config.msa_residual,
            )
            dec_t = init_msa_params(
                m, config.msa_heads, rng,
                use_positional=config.msa_positional,
                residual=config.msa_residual,
            )
        return cls(config, w, w_dec, enc_t, dec_t)

    # -- forward -----------------------------------------------------------

    def encode(self, s):
        """Project signals into the network space: returns (s_f, activations)."""
        s = np.asarray(s, dtype=np.float64)
        if s.ndim != 2 or s.shape[1] != self.config.n_voxels:
            raise ShapeError(
                f"expected (t, {self.config.n_voxels}) signals, got {s.shape}"
            )
        s_f = linear_forward(s, self.w)
        l, _ = _temporal_forward(self.enc_temporal, s_f)
        return s_f, l

    def decode(self, l):
        """Map temporal activations back to voxel space."""
        l = np.asarray(l, dtype=np.float64)
        if l.ndim != 2 or l.shape[1] != self.config.n_networks:
            raise ShapeError(
                f"expected (t, {self.config.n_networks}) activations, got {l.shape}"
            )
        d, _ = _temporal_forward(self.dec_temporal, l)
        return linear_forward(d, self.w_dec)

    def _forward_caches(self, s):
        s_f = linear_forward(s, self.w)
        l, enc_cache = _temporal_forward(self.enc_temporal, s_f)
        d, dec_cache = _temporal_forward(self.dec_temporal, l)
        s_rec = linear_forward(d, self.w_dec)
        return s_rec, (s, s_f, l, d, enc_cache, dec_cache)

    # -- parameters ----------------------------------------------------------

    def named_parameters(self):
        """Live views of every trainable array, keyed by a stable name."""
        params = {"enc.w": self.w, "dec.w": self.w_dec}
        params.update(_temporal_param_dict("enc", self.enc_temporal))
        params.update(_temporal_param_dict("dec", self.dec_temporal))
        return params

    # -- loss / gradients ----------------------------------------------------

    def loss_and_grads(self, signals):
        """Mean reconstruction MSE over a batch of (t, n) matrices, with
        gradients for every parameter accumulated in batch order."""
        batch = len(signals)
        if batch == 0:
            raise InputError("empty batch")
        grads = {k: np.zeros_like(v) for k, v in self.named_parameters().items()}
        total = 0.0
        for s in signals:
            s_rec, (s, s_f, l, d, enc_cache, dec_cache) = self._forward_caches(s)
            err = s_rec - s
            t, n = s.shape
            total += float(np.mean(err * err))
            d_rec = (2.0 / (t * n * batch)) * err
            dd, dw_dec = linear_backward(d, self.w_dec, d_rec)
            grads["dec.w"] += dw_dec
            dl = _temporal_backward("dec", self.dec_temporal, dec_cache, dd, grads)
            ds_f = _temporal_backward("enc", self.enc_temporal, enc_cache, dl, grads)
            _, dw = linear_backward(s, self.w, ds_f)
            grads["enc.w"] += dw
        return total / batch, grads

    def evaluate(self, signals):
        total = 0.0
        for s in signals:
            s_rec, _ = self._forward_caches(np.asarray(s, dtype=np.float64))
            err = s_rec - s
            total += float(np.mean(err * err))
        return total / len(signals)


def _temporal_forward(params, x):
    if params is None:
        return x, None
    if isinstance(params, LstmParams):
        return lstm_forward(x, params)
    return msa_forward(x, params)


def _temporal_param_dict(side, params):
    if params is None:
        return {}
    if isinstance(params, LstmParams):
        out = {}
        for k, lay in enumerate(params.layers):
            out[f"{side}.lstm.{k}.wx"] = lay.wx
            out[f"{side}.lstm.{k}.wh"] = lay.wh
            out[f"{side}.lstm.{k}.b"] = lay.b
        return out
    return {
        f"{side}.msa.wq": params.wq,
        f"{side}.msa.wk": params.wk,
        f"{side}.msa.wv": params.wv,
        f"{side}.msa.wo": params.wo,
    }


def _temporal_backward(side, params, cache, d_out, grads):
    if params is None:
        return d_out
    if isinstance(params, LstmParams):
        dx, g = lstm_backward(cache, d_out)
        for k, lay in enumerate(g.layers):
            grads[f"{side}.lstm.{k}.wx"] += lay.wx
            grads[f"{side}.lstm.{k}.wh"] += lay.wh
            grads[f"{side}.lstm.{k}.b"] += lay.b
        return dx
    dx, g = msa_backward(cache, d_out)
    grads[f"{side}.msa.wq"] += g.wq
    grads[f"{side}.msa.wk"] += g.wk
    grads[f"{side}.msa.wv"] += g.wv
    grads[f"{side}.msa.wo"] += g.wo
    return dx


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainingLog:
    rows: list  # (epoch, train_mse, val_mse); epoch 0 is the pre-training state

    def to_csv(self):
        lines = ["epoch,train_mse,val_mse"]
        for epoch, tr, va in self.rows:
            va_s = "" if math.isnan(va) else repr(va)
            lines.append(f"{epoch},{tr!r},{va_s}")
        return "\n".join(lines) + "\n"

    @property
    def final_train_mse(self):
        return self.rows[-1][1]

    @property
    def initial_train_mse(self):
        return self.rows[0][1]


def train(datasets, config, initial_model=None):
    """Fit the embedding on the train split; returns (model, TrainingLog).

    All subjects must share the same matrix shape. Subjects are the batch
    unit; epoch shuffling and initialization both derive from config.seed,
    so identical inputs give bit-identical models. Pass ``initial_model`` to
    resume from explicit weights instead of the seeded initialization.
    """
    train_s = [d.signal for d in datasets if d.split == "train"]
    val_s = [d.signal for d in datasets if d.split == "val"]
    if not train_s:
        raise InputError("no training subjects in the dataset list")
    shapes = {d.signal.shape for d in datasets}
    if len(shapes) != 1:
        raise InputError(f"subjects disagree on matrix shape: {sorted(shapes)}")
    t, n = shapes.pop()
    if n != config.n_voxels:
        raise InputError(f"config says {config.n_voxels} voxels, data has {n}")

    model = initial_model if initial_model is not None else EmbeddingModel.initialize(config)
    params = model.named_parameters()
    opt = AdamState.for_params(
        params, lr=config.lr, beta1=config.beta1, beta2=config.beta2
    )
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))

    def eval_val():
        return model.evaluate(val_s) if val_s else math.nan

    rows = [(0, model.evaluate(train_s), eval_val())]
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_s))
        for start in range(0, len(order), config.batch_size):
            batch = [train_s[i] for i in order[start : start + config.batch_size]]
            loss, grads = model.loss_and_grads(batch)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            adam_step(params, grads, opt)
        train_mse = model.evaluate(train_s)
        val_mse = eval_val()
        if not math.isfinite(train_mse):
            raise NumericError(f"non-finite training MSE at epoch {epoch}")
        rows.append((epoch, train_mse, val_mse))
    return model, TrainingLog(rows=rows)


def subject_average(activations):
    """Elementwise mean of per-subject activation matrices."""
    activations = list(activations)
    if not activations:
        raise InputError("subject_average needs at least one subject")
    shapes = {np.asarray(a).shape for a in activations}
    if len(shapes) != 1:
        raise InputError(f"activation shapes disagree: {sorted(shapes)}")
    stack = np.stack([np.asarray(a, dtype=np.float64) for a in activations])
    return stack.mean(axis=0)


def average_test_activations(model, datasets, split="test"):
    """Encode every subject in ``split`` and average their activations."""
    chosen = [d for d in datasets if d.split == split]
    if not chosen:
        raise InputError(f"no subjects with split {split!r}")
    return subject_average([model.encode(d.signal)[1] for d in chosen])


# ---------------------------------------------------------------------------
# Spatial-map export
# ---------------------------------------------------------------------------

def percentile_bounds(values, lo, hi):
    """(lo-th, hi-th) percentile of ``values`` with linear interpolation."""
    if not 0.0 <= lo < hi <= 100.0:
        raise InputError(f"need 0 <= lo < hi <= 100, got lo={lo} hi={hi}")
    p_lo, p_hi = np.percentile(np.asarray(values, dtype=np.float64), [lo, hi])
    return float(p_lo), float(p_hi)


def export_fbn_map(model, k, coords, volume_shape, lo=40.0, hi=99.0):
    """Scatter encoder column ``k`` into a 3-D volume, keeping only voxels
    whose |weight| sits between the lo-th and hi-th percentile."""
    m = model.config.n_networks
    if not 0 <= k < m:
        raise IndexError(f"network index {k} out of range [0, {m})")
    coords = np.asarray(coords)
    if coords.ndim != 2 or coords.shape != (model.config.n_voxels, 3):
        raise InputError(
            f"coords must be ({model.config.n_voxels}, 3), got {coords.shape}"
        )
    w = model.w[:, k]
    aw = np.abs(w)
    p_lo, p_hi = percentile_bounds(aw, lo, hi)
    keep = (aw >= p_lo) & (aw <= p_hi)
    vol = np.zeros(volume_shape)
    ijk = coords[keep].astype(np.intp)
    vol[ijk[:, 0], ijk[:, 1], ijk[:, 2]] = w[keep]
    return vol


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model, path):
    params = model.named_parameters()
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    header = json.dumps(asdict(model.config), sort_keys=True).encode("utf-8")
    blob += struct.pack("<I", len(header))
    blob += header
    blob += struct.pack("<I", len(params))
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype=np.float64)
        nb = name.encode("utf-8")
        blob += struct.pack("<H", len(nb))
        blob += nb
        blob += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            blob += struct.pack("<Q", dim)
        blob += arr.astype("<f8").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(blob)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()

    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"checkpoint truncated while reading {what}", offset=pos)
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(4, "magic") != CHECKPOINT_MAGIC:
        raise FormatError("not a checkpoint file (bad magic)", offset=0)
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4)
    (hlen,) = struct.unpack("<I", take(4, "header length"))
    config = EmbeddingConfig(**json.loads(take(hlen, "config").decode("utf-8")))
    model = EmbeddingModel.initialize(config)
    params = model.named_parameters()
    (count,) = struct.unpack("<I", take(4, "parameter count"))
    if count != len(params):
        raise FormatError(
            f"checkpoint has {count} parameters, model expects {len(params)}"
        )
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        name = take(nlen, "name").decode("utf-8")
        if name not in params:
            raise FormatError(f"unknown parameter {name!r} in checkpoint")
        (ndim,) = struct.unpack("<B", take(1, "ndim"))
        shape = tuple(
            struct.unpack("<Q", take(8, "dimension"))[0] for _ in range(ndim)
        )
        if shape != params[name].shape:
            raise FormatError(
                f"parameter {name!r} has shape {shape}, expected {params[name].shape}"
            )
        raw = take(8 * int(np.prod(shape, dtype=np.int64)), f"data for {name!r}")
        params[name][...] = np.frombuffer(raw, dtype="<f8").reshape(shape)
    if pos != len(data):
        raise FormatError("trailing bytes after last parameter", offset=pos)
    return model
