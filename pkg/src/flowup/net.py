"""Permutation-equivariant, time-conditioned velocity network in plain numpy.

Layout (widths configurable through :class:`NetArch`)::

    per point   [x | knn offsets | cond] -> enc0 -> act -> enc1 -> act = h   (N, 128)
    global      max_N(h) -> glob -> act                            = g   (128)
    time        sinusoidal embedding of t                          = e   (64)
    decoder     act(h W_p + g W_g + e W_t + b) -> out              = v   (N, 3)

The knn offsets are ``LOCAL_GAIN * (x_j - x_i)`` for the ``local_k`` nearest
neighbours ``j`` of each point, nearest first. With ``edge_pool`` set, enc0
instead maps every edge ``[x_i | LOCAL_GAIN * (x_j - x_i)]`` (self edge
included) and the point keeps the channel-wise max over its edges, a single
set-abstraction style grouping. Every per-point map is shared
across points, neighbour lists follow the points, and the only reduction is a
max, so permuting the input rows permutes the output rows.
Gradients are hand-written; ``forward`` returns a tape that ``backward``
consumes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .errors import InvalidArgumentError, NumericalError
from .geometry import knn_graph

# offsets between neighbours are ~0.05 in a unit patch; bring them to O(1)
LOCAL_GAIN = 10.0

# fixed tensor order; the checkpoint payload follows it
PARAM_ORDER = (
    "enc0.w", "enc0.b",
    "enc1.w", "enc1.b",
    "glob.w", "glob.b",
    "dec0.wp", "dec0.wg", "dec0.wt", "dec0.b",
    "out.w", "out.b",
)


@dataclass(frozen=True)
class NetArch:
    in_dim: int = 3
    cond_dim: int = 0
    local_k: int = 8
    enc_hidden: int = 64
    point_dim: int = 128
    global_dim: int = 128
    time_dim: int = 64
    dec_hidden: int = 64
    out_dim: int = 3
    # top frequency of the sinusoidal time embedding
    time_max_freq: int = 10000
    # 1: enc0 runs on every (point, neighbour) edge and is max-pooled per point
    edge_pool: int = 0

    def __post_init__(self):
        for name, val in asdict(self).items():
            if int(val) != val or val < (0 if name in ("cond_dim", "local_k", "edge_pool") else 1):
                raise InvalidArgumentError(f"invalid architecture field {name}={val}")
        if self.edge_pool not in (0, 1):
            raise InvalidArgumentError(f"edge_pool must be 0 or 1, got {self.edge_pool}")
        if self.time_dim % 2:
            raise InvalidArgumentError("time_dim must be even")

    @property
    def enc_in(self) -> int:
        if self.edge_pool:
            return 2 * self.in_dim + self.cond_dim
        return self.in_dim * (1 + self.local_k) + self.cond_dim

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {
            "enc0.w": (self.enc_in, self.enc_hidden),
            "enc0.b": (self.enc_hidden,),
            "enc1.w": (self.enc_hidden, self.point_dim),
            "enc1.b": (self.point_dim,),
            "glob.w": (self.point_dim, self.global_dim),
            "glob.b": (self.global_dim,),
            "dec0.wp": (self.point_dim, self.dec_hidden),
            "dec0.wg": (self.global_dim, self.dec_hidden),
            "dec0.wt": (self.time_dim, self.dec_hidden),
            "dec0.b": (self.dec_hidden,),
            "out.w": (self.dec_hidden, self.out_dim),
            "out.b": (self.out_dim,),
        }

    def num_params(self) -> int:
        return sum(math.prod(s) for s in self.shapes().values())


@dataclass
class NetParams:
    arch: NetArch
    tensors: dict[str, np.ndarray]

    @property
    def dtype(self):
        return self.tensors["enc0.w"].dtype

    def copy(self) -> "NetParams":
        return NetParams(self.arch, {k: v.copy() for k, v in self.tensors.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[k].ravel() for k in PARAM_ORDER])

    @classmethod
    def from_flat(cls, arch: NetArch, flat, dtype=None) -> "NetParams":
        flat = np.asarray(flat)
        if flat.size != arch.num_params():
            raise InvalidArgumentError(f"expected {arch.num_params()} values, got {flat.size}")
        tensors, pos = {}, 0
        for k in PARAM_ORDER:
            shape = arch.shapes()[k]
            size = math.prod(shape)
            tensors[k] = flat[pos : pos + size].reshape(shape).astype(dtype or flat.dtype, copy=True)
            pos += size
        return cls(arch, tensors)


def init_params(arch: NetArch, rng: np.random.Generator, dtype=np.float32) -> NetParams:
    """Uniform(+-1/sqrt(fan_in)) init; the output layer starts at exactly zero."""
    shapes = arch.shapes()
    dec_fan_in = arch.point_dim + arch.global_dim + arch.time_dim
    fan_in = {
        "enc0": shapes["enc0.w"][0],
        "enc1": arch.enc_hidden,
        "glob": arch.point_dim,
        "dec0": dec_fan_in,
    }
    tensors = {}
    for k in PARAM_ORDER:
        layer = k.split(".")[0]
        if layer == "out":
            tensors[k] = np.zeros(shapes[k], dtype=dtype)
        else:
            bound = 1.0 / math.sqrt(fan_in[layer])
            tensors[k] = rng.uniform(-bound, bound, size=shapes[k]).astype(dtype)
    return NetParams(arch, tensors)


# ---------------------------------------------------------------------------
# time embedding


@dataclass(frozen=True)
class TimeEmbedding:
    dim: int = 64
    min_freq: float = 1.0
    max_freq: float = 1e4

    def frequencies(self) -> np.ndarray:
        half = self.dim // 2
        if half == 1:
            return np.array([self.min_freq])
        return np.geomspace(self.min_freq, self.max_freq, half)


def time_embed(t, cfg: TimeEmbedding = TimeEmbedding()) -> np.ndarray:
    """Interleaved ``[sin(f0 t), cos(f0 t), sin(f1 t), ...]``; batched over ``t``."""
    tt = np.asarray(t, dtype=np.float64)
    ang = tt[..., None] * cfg.frequencies()
    out = np.empty(tt.shape + (cfg.dim,))
    out[..., 0::2] = np.sin(ang)
    out[..., 1::2] = np.cos(ang)
    return out


# ---------------------------------------------------------------------------
# forward / backward


def silu(z):
    return z * expit(z)


def silu_grad(z):
    s = expit(z)
    return s * (1.0 + z * (1.0 - s))


def local_offsets(x, k: int) -> np.ndarray:
    """``LOCAL_GAIN * (x_j - x_i)`` for the ``k`` nearest ``j``, flattened per point."""
    b, n, d = x.shape
    if k == 0:
        return np.zeros((b, n, 0), dtype=x.dtype)
    if n <= k:
        raise InvalidArgumentError(f"need more than local_k={k} points, got {n}")
    out = np.empty((b, n, k * d), dtype=x.dtype)
    for i in range(b):
        nb = knn_graph(x[i], k)
        out[i] = ((x[i][nb] - x[i][:, None, :]) * x.dtype.type(LOCAL_GAIN)).reshape(n, k * d)
    return out


def edge_features(x, k: int, cond=None) -> np.ndarray:
    """``[x_i | LOCAL_GAIN * (x_j - x_i) | cond_i]`` for ``j`` = self then the ``k`` nearest.

    Shape ``(B, N, k + 1, 2 d + c)``; the self edge carries a zero offset.
    """
    b, n, d = x.shape
    if n <= k:
        raise InvalidArgumentError(f"need more than local_k={k} points, got {n}")
    nb = np.empty((b, n, k + 1), dtype=np.int64)
    nb[:, :, 0] = np.arange(n)
    for i in range(b):
        if k:
            nb[i, :, 1:] = knn_graph(x[i], k)
    xj = x[np.arange(b)[:, None, None], nb]
    xi = np.broadcast_to(x[:, :, None, :], xj.shape)
    parts = [xi, (xj - xi) * x.dtype.type(LOCAL_GAIN)]
    if cond is not None:
        parts.append(np.broadcast_to(cond[:, :, None, :], xj.shape[:3] + (cond.shape[-1],)))
    return np.concatenate(parts, axis=-1)


def _finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in {what}")


def forward(params: NetParams, x, t, cond=None):
    """Velocities for ``x`` of shape ``(N, d)`` or ``(B, N, d)``.

    ``t`` is a scalar or one value per batch item. Returns ``(v, tape)``.
    """
    p = params.tensors
    arch = params.arch
    dtype = params.dtype
    x = np.asarray(x, dtype=dtype)
    single = x.ndim == 2
    if single:
        x = x[None]
        if cond is not None:
            cond = np.asarray(cond)[None]
    if x.shape[-1] != arch.in_dim:
        raise InvalidArgumentError(f"input has {x.shape[-1]} channels, architecture expects {arch.in_dim}")
    if cond is not None:
        cond = np.asarray(cond, dtype=dtype)
        if cond.shape[:2] != x.shape[:2]:
            raise InvalidArgumentError(f"condition shape {cond.shape} does not match input {x.shape}")
    if arch.edge_pool:
        inp = edge_features(x, arch.local_k, cond)
    else:
        parts = [x, local_offsets(x, arch.local_k)] + ([cond] if cond is not None else [])
        inp = np.concatenate(parts, axis=-1)
    if inp.shape[-1] != arch.enc_in:
        raise InvalidArgumentError(f"input has {inp.shape[-1]} channels, architecture expects {arch.enc_in}")
    b = inp.shape[0]
    tt = np.broadcast_to(np.asarray(t, dtype=np.float64), (b,))

    z0 = inp @ p["enc0.w"] + p["enc0.b"]
    arg0 = None
    if arch.edge_pool:
        # max over each point's edges, as in a set-abstraction layer
        he = silu(z0)
        arg0 = np.argmax(he, axis=2)  # (B, N, H)
        h0 = np.take_along_axis(he, arg0[:, :, None, :], axis=2)[:, :, 0, :]
    else:
        h0 = silu(z0)
    z1 = h0 @ p["enc1.w"] + p["enc1.b"]
    h1 = silu(z1)
    arg = np.argmax(h1, axis=1)  # (B, C)
    pooled = np.take_along_axis(h1, arg[:, None, :], axis=1)[:, 0, :]
    zg = pooled @ p["glob.w"] + p["glob.b"]
    g = silu(zg)
    e = time_embed(tt, TimeEmbedding(arch.time_dim, max_freq=float(arch.time_max_freq))).astype(dtype)
    shared = g @ p["dec0.wg"] + e @ p["dec0.wt"] + p["dec0.b"]  # (B, H)
    zd = h1 @ p["dec0.wp"] + shared[:, None, :]
    hd = silu(zd)
    out = hd @ p["out.w"] + p["out.b"]
    _finite(out, "network output")

    tape = dict(inp=inp, z0=z0, arg0=arg0, h0=h0, z1=z1, h1=h1, arg=arg, pooled=pooled,
                zg=zg, g=g, e=e, zd=zd, hd=hd, single=single)
    return (out[0] if single else out), tape


def backward(params: NetParams, tape, dout) -> dict[str, np.ndarray]:
    """Parameter gradients given the upstream gradient of the output."""
    p = params.tensors
    dout = np.asarray(dout, dtype=params.dtype)
    if tape["single"]:
        dout = dout[None]
    if dout.shape != tape["hd"].shape[:2] + (params.arch.out_dim,):
        raise InvalidArgumentError(f"upstream gradient shape {dout.shape} does not match the tape")
    grads = {}
    bn = tape["hd"].shape[0] * tape["hd"].shape[1]

    def flat(a):
        return a.reshape(bn, a.shape[-1])

    grads["out.w"] = flat(tape["hd"]).T @ flat(dout)
    grads["out.b"] = dout.sum(axis=(0, 1))
    dzd = (dout @ p["out.w"].T) * silu_grad(tape["zd"])
    grads["dec0.wp"] = flat(tape["h1"]).T @ flat(dzd)
    dshared = dzd.sum(axis=1)  # (B, H)
    grads["dec0.wg"] = tape["g"].T @ dshared
    grads["dec0.wt"] = tape["e"].T @ dshared
    grads["dec0.b"] = dshared.sum(axis=0)
    dzg = (dshared @ p["dec0.wg"].T) * silu_grad(tape["zg"])
    grads["glob.w"] = tape["pooled"].T @ dzg
    grads["glob.b"] = dzg.sum(axis=0)
    dpooled = dzg @ p["glob.w"].T  # (B, C)

    dh1 = dzd @ p["dec0.wp"].T
    bidx = np.arange(dh1.shape[0])[:, None]
    cidx = np.arange(dh1.shape[2])[None, :]
    np.add.at(dh1, (bidx, tape["arg"], cidx), dpooled)
    dz1 = dh1 * silu_grad(tape["z1"])
    grads["enc1.w"] = flat(tape["h0"]).T @ flat(dz1)
    grads["enc1.b"] = dz1.sum(axis=(0, 1))
    dh0 = dz1 @ p["enc1.w"].T
    if tape["arg0"] is not None:
        # only the winning edge of each (point, channel) receives gradient
        de = np.zeros_like(tape["z0"])
        np.put_along_axis(de, tape["arg0"][:, :, None, :], dh0[:, :, None, :], axis=2)
        dh0 = de
    dz0 = dh0 * silu_grad(tape["z0"])
    inp = tape["inp"]
    grads["enc0.w"] = inp.reshape(-1, inp.shape[-1]).T @ dz0.reshape(-1, dz0.shape[-1])
    grads["enc0.b"] = dz0.reshape(-1, dz0.shape[-1]).sum(axis=0)
    return grads


def as_field(params: NetParams, cond=None):
    """Wrap parameters as a ``(x, t) -> v`` callable for the samplers."""

    def field(x, t):
        out, _ = forward(params, x, t, cond)
        return out.astype(np.float64)

    return field


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: NetParams, grads: dict, state: AdamState) -> tuple[NetParams, AdamState]:
    """One bias-corrected Adam update, applied in place."""
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {k}")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for k in PARAM_ORDER:
        w = params.tensors[k]
        g = np.asarray(grads[k], dtype=w.dtype)
        if g.shape != w.shape:
            raise InvalidArgumentError(f"gradient shape {g.shape} != parameter shape {w.shape} for {k}")
        if k not in state.m:
            state.m[k] = np.zeros_like(w)
            state.v[k] = np.zeros_like(w)
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        w -= (state.lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)
    return params, state
