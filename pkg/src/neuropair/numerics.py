"""Dense float64 building blocks with hand-written backprop.

The model family is small and fixed (linear map, LSTM stack, one
self-attention block), so gradients are derived per operation rather than
through a general autodiff tape. Every ``*_forward`` returns a cache that
the matching ``*_backward`` consumes; parameter gradients come back in
containers shaped like the parameters themselves.

All arrays are C-contiguous float64. Sequential inner loops live in
:mod:`neuropair.kernels`; everything else is plain numpy.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericError, ShapeError
from .kernels import lstm_steps_backward, lstm_steps_forward


def as_matrix(a, name="array"):
    """Validate a 2-D finite float64 matrix, converting if needed."""
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise NumericError(f"{name} contains non-finite entries")
    return out


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# ---------------------------------------------------------------------------
# Linear map
# ---------------------------------------------------------------------------

def linear_forward(x, w):
    """Matrix product x (t, n) . w (n, m) -> (t, m)."""
    if x.shape[1] != w.shape[0]:
        raise ShapeError(
            f"inner dimensions disagree: x is {x.shape}, w is {w.shape}"
        )
    return x @ w


def linear_backward(x, w, d_out):
    """Gradients of a scalar loss through ``linear_forward``."""
    dx = d_out @ w.T
    dw = x.T @ d_out
    return dx, dw


# ---------------------------------------------------------------------------
# LSTM stack
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class LstmLayerParams:
    wx: np.ndarray  # (input, 4*hidden), gate order [i, f, g, o]
    wh: np.ndarray  # (hidden, 4*hidden)
    b: np.ndarray   # (4*hidden,)


@dataclass(eq=False)
class LstmParams:
    layers: list[LstmLayerParams]
    hidden: int

    def __post_init__(self):
        if len(self.layers) < 1:
            raise InputError("LSTM needs at least one layer")
        for k, lay in enumerate(self.layers):
            din = lay.wx.shape[0]
            if lay.wx.shape != (din, 4 * self.hidden):
                raise ShapeError(f"layer {k} wx has shape {lay.wx.shape}")
            if lay.wh.shape != (self.hidden, 4 * self.hidden):
                raise ShapeError(f"layer {k} wh has shape {lay.wh.shape}")
            if lay.b.shape != (4 * self.hidden,):
                raise ShapeError(f"layer {k} b has shape {lay.b.shape}")


def init_lstm_params(input_size, hidden, n_layers, rng):
    """Uniform +-1/sqrt(fan-in) weights, zero biases, forget-gate bias +1."""
    layers = []
    for k in range(n_layers):
        din = input_size if k == 0 else hidden
        sx = 1.0 / math.sqrt(din)
        sh = 1.0 / math.sqrt(hidden)
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0
        layers.append(
            LstmLayerParams(
                wx=rng.uniform(-sx, sx, (din, 4 * hidden)),
                wh=rng.uniform(-sh, sh, (hidden, 4 * hidden)),
                b=b,
            )
        )
    return LstmParams(layers=layers, hidden=hidden)


def lstm_forward(x, params):
    """Run the LSTM stack over time; returns (hidden states (t, H), cache)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"LSTM input must be 2-D, got {x.shape}")
    if x.shape[0] < 1:
        raise InputError("LSTM input needs at least one time step")
    if x.shape[1] != params.layers[0].wx.shape[0]:
        raise ShapeError(
            f"input width {x.shape[1]} != layer-0 width {params.layers[0].wx.shape[0]}"
        )
    hd = params.hidden
    h0 = np.zeros(hd)
    c0 = np.zeros(hd)
    caches = []
    inp = x
    for lay in params.layers:
        xp = inp @ lay.wx + lay.b
        hs, cs, tc, gi, gf, gg, go = lstm_steps_forward(
            np.ascontiguousarray(xp), lay.wh, h0, c0
        )
        caches.append((inp, hs, cs, tc, gi, gf, gg, go))
        inp = hs
    return inp, (params, caches)


def lstm_backward(cache, d_out):
    """Backprop through time; returns (dx, gradients as LstmParams)."""
    params, caches = cache
    hd = params.hidden
    c0 = np.zeros(hd)
    grads = []
    dh = np.ascontiguousarray(d_out, dtype=np.float64)
    for lay, (inp, hs, cs, tc, gi, gf, gg, go) in zip(
        reversed(params.layers), reversed(caches)
    ):
        dz = lstm_steps_backward(dh, lay.wh, c0, cs, tc, gi, gf, gg, go)
        h_prev = np.vstack([np.zeros((1, hd)), hs[:-1]])
        grads.append(
            LstmLayerParams(wx=inp.T @ dz, wh=h_prev.T @ dz, b=dz.sum(axis=0))
        )
        dh = dz @ lay.wx.T
    grads.reverse()
    return dh, LstmParams(layers=grads, hidden=hd)


# ---------------------------------------------------------------------------
# Multi-head self-attention block
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class MsaParams:
    heads: int
    width: int
    wq: np.ndarray  # (d, d), heads concatenated along columns
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray  # (d, d) output projection
    use_positional: bool = True
    residual: bool = True

    def __post_init__(self):
        if self.width % self.heads != 0:
            raise InputError(
                f"width {self.width} not divisible by {self.heads} heads"
            )
        for name in ("wq", "wk", "wv", "wo"):
            w = getattr(self, name)
            if w.shape != (self.width, self.width):
                raise ShapeError(f"{name} has shape {w.shape}, want square {self.width}")

    @property
    def head_dim(self):
        return self.width // self.heads


def init_msa_params(width, heads, rng, use_positional=True, residual=True):
    s = 1.0 / math.sqrt(width)
    return MsaParams(
        heads=heads,
        width=width,
        wq=rng.uniform(-s, s, (width, width)),
        wk=rng.uniform(-s, s, (width, width)),
        wv=rng.uniform(-s, s, (width, width)),
        wo=rng.uniform(-s, s, (width, width)),
        use_positional=use_positional,
        residual=residual,
    )


def positional_encoding(t, d):
    """Sinusoidal position table (t, d): even columns sine, odd cosine."""
    pos = np.arange(t)[:, None].astype(np.float64)
    idx = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (idx // 2)) / d)
    pe = np.empty((t, d))
    pe[:, 0::2] = np.sin(angle[:, 0::2])
    pe[:, 1::2] = np.cos(angle[:, 1::2])
    return pe


def _softmax_rows(s):
    e = np.exp(s - s.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def msa_attention(x, params):
    """Attention core: per-head softmax(Q Kt / sqrt(dh)) V, heads concatenated
    through the output projection. No positional encoding, no residual."""
    if x.shape[1] != params.width:
        raise ShapeError(f"input width {x.shape[1]} != model width {params.width}")
    dh = params.head_dim
    scale = 1.0 / math.sqrt(dh)
    q = x @ params.wq
    k = x @ params.wk
    v = x @ params.wv
    attn = []
    concat = np.empty_like(q)
    for h in range(params.heads):
        sl = slice(h * dh, (h + 1) * dh)
        a = _softmax_rows(scale * (q[:, sl] @ k[:, sl].T))
        concat[:, sl] = a @ v[:, sl]
        attn.append(a)
    out = concat @ params.wo
    cache = (x, q, k, v, attn, concat)
    return out, cache


def _msa_attention_backward(cache, params, d_out):
    x, q, k, v, attn, concat = cache
    dh = params.head_dim
    scale = 1.0 / math.sqrt(dh)
    d_concat = d_out @ params.wo.T
    dwo = concat.T @ d_out
    dq = np.empty_like(q)
    dk = np.empty_like(k)
    dv = np.empty_like(v)
    for h in range(params.heads):
        sl = slice(h * dh, (h + 1) * dh)
        a = attn[h]
        d_oh = d_concat[:, sl]
        da = d_oh @ v[:, sl].T
        dv[:, sl] = a.T @ d_oh
        # softmax Jacobian: ds = a * (da - sum_j(da * a))
        ds = a * (da - (da * a).sum(axis=1, keepdims=True))
        dq[:, sl] = scale * (ds @ k[:, sl])
        dk[:, sl] = scale * (ds.T @ q[:, sl])
    dx = dq @ params.wq.T + dk @ params.wk.T + dv @ params.wv.T
    grads = dict(wq=x.T @ dq, wk=x.T @ dk, wv=x.T @ dv, wo=dwo)
    return dx, grads


def msa_forward(x, params):
    """Full block: optional sinusoidal positions added to the input, attention
    core, and a residual connection around the core when enabled."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeError(f"attention input must be 2-D non-empty, got {x.shape}")
    xin = x + positional_encoding(*x.shape) if params.use_positional else x
    core, core_cache = msa_attention(xin, params)
    out = xin + core if params.residual else core
    return out, (params, core_cache)


def msa_backward(cache, d_out):
    """Gradients through ``msa_forward``; returns (dx, grads dict)."""
    params, core_cache = cache
    d_core_in, grads = _msa_attention_backward(core_cache, params, d_out)
    dx = d_out + d_core_in if params.residual else d_core_in
    g = MsaParams(
        heads=params.heads,
        width=params.width,
        wq=grads["wq"],
        wk=grads["wk"],
        wv=grads["wv"],
        wo=grads["wo"],
        use_positional=params.use_positional,
        residual=params.residual,
    )
    return dx, g


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr < 0:
            raise InputError("learning rate must be non-negative")
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state


def adam_step(params, grads, state):
    """One bias-corrected Adam update, applied to ``params`` in place.

    ``params`` and ``grads`` are dicts of identically-shaped arrays; keys are
    visited in sorted order so accumulation is deterministic.
    """
    for name in sorted(params):
        if not np.all(np.isfinite(grads[name])):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        if params[name].shape != grads[name].shape:
            raise ShapeError(
                f"gradient shape {grads[name].shape} != parameter shape "
                f"{params[name].shape} for {name!r}"
            )
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name in sorted(params):
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[name] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------

def grad_check(loss_and_grads, params, eps=1e-5, max_coords=None, rng=None):
    """Max relative error between analytic gradients and central differences.

    ``loss_and_grads`` evaluates the model at the current (mutable) ``params``
    and returns ``(loss, grads_dict)``. Each parameter coordinate (or a random
    sample of ``max_coords`` per parameter) is perturbed by +-eps. The
    relative error is |a - n| / max(1, |a|, |n|).
    """
    if not 1e-6 <= eps <= 1e-4:
        raise InputError(f"step size {eps} outside [1e-6, 1e-4]")
    _, analytic = loss_and_grads()
    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for name in sorted(params):
        p = params[name]
        flat = p.reshape(-1)
        n_coords = flat.size
        if max_coords is not None and n_coords > max_coords:
            coords = rng.choice(n_coords, size=max_coords, replace=False)
        else:
            coords = range(n_coords)
        a_flat = analytic[name].reshape(-1)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + eps
            f_plus = loss_and_grads()[0]
            flat[idx] = orig - eps
            f_minus = loss_and_grads()[0]
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = a_flat[idx]
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if rel > worst:
                worst = rel
    return worst
