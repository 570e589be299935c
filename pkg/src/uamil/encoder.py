"""Instance encoder: two 1-D convolutions feeding a pooled branch and a GRU.

Layout inside this module is time-major per sample, ``(batch, time, channels)``.
Public entry points take windows as ``(M, W)`` or ``(B, M, W)`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .errors import ShapeError

CONV1_FILTERS, CONV1_WIDTH = 32, 8
CONV2_FILTERS, CONV2_WIDTH = 32, 5
HIDDEN = 32
DEFAULT_DIM = 64

PARAM_NAMES = ("conv1_w", "conv1_b", "conv2_w", "conv2_b",
               "gru_wx", "gru_wh", "gru_b", "proj_w", "proj_b")


def param_shapes(n_channels: int, dim: int = DEFAULT_DIM) -> dict[str, tuple[int, ...]]:
    return {
        "conv1_w": (CONV1_FILTERS, n_channels, CONV1_WIDTH),
        "conv1_b": (CONV1_FILTERS,),
        "conv2_w": (CONV2_FILTERS, CONV1_FILTERS, CONV2_WIDTH),
        "conv2_b": (CONV2_FILTERS,),
        # gates packed as [update | reset | candidate]
        "gru_wx": (CONV2_FILTERS, 3 * HIDDEN),
        "gru_wh": (HIDDEN, 3 * HIDDEN),
        "gru_b": (3 * HIDDEN,),
        "proj_w": (CONV2_FILTERS + HIDDEN, dim),
        "proj_b": (dim,),
    }


def count_params(n_channels: int, dim: int = DEFAULT_DIM) -> int:
    return sum(int(np.prod(s)) for s in param_shapes(n_channels, dim).values())


@dataclass
class EncoderParams:
    arrays: dict[str, np.ndarray]

    @property
    def n_channels(self) -> int:
        return self.arrays["conv1_w"].shape[1]

    @property
    def dim(self) -> int:
        return self.arrays["proj_b"].shape[0]

    def __getitem__(self, name):
        return self.arrays[name]

    def describe(self) -> dict:
        shapes = {k: list(v.shape) for k, v in self.arrays.items()}
        return {"n_channels": self.n_channels, "dim": self.dim,
                "shapes": shapes, "n_params": self.size}

    @property
    def size(self) -> int:
        return sum(v.size for v in self.arrays.values())

    def copy(self) -> "EncoderParams":
        return EncoderParams({k: v.copy() for k, v in self.arrays.items()})

    @classmethod
    def zeros(cls, n_channels: int, dim: int = DEFAULT_DIM) -> "EncoderParams":
        return cls({k: np.zeros(s) for k, s in param_shapes(n_channels, dim).items()})

    @classmethod
    def init(cls, n_channels: int, rng: np.random.Generator,
             dim: int = DEFAULT_DIM) -> "EncoderParams":
        """Uniform in +-1/sqrt(fan_in) for every layer."""
        fan_in = {"conv1": n_channels * CONV1_WIDTH, "conv2": CONV1_FILTERS * CONV2_WIDTH,
                  "gru": HIDDEN, "proj": CONV2_FILTERS + HIDDEN}
        arrays = {}
        for name, shape in param_shapes(n_channels, dim).items():
            bound = 1.0 / np.sqrt(fan_in[name.split("_")[0]])
            arrays[name] = rng.uniform(-bound, bound, size=shape)
        return cls(arrays)

    def to_dict(self) -> dict:
        return {k: self.arrays[k].tolist() for k in PARAM_NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderParams":
        return cls({k: np.asarray(d[k], dtype=np.float64) for k in PARAM_NAMES})


def _pads(width: int) -> tuple[int, int]:
    left = (width - 1) // 2
    return left, width - 1 - left


def _conv_forward(h, w, b):
    """'same' zero-padded 1-D convolution; ``h`` is (B, T, C), ``w`` (F, C, K)."""
    B, T, C = h.shape
    F, _, K = w.shape
    left, right = _pads(K)
    hp = np.pad(h, ((0, 0), (left, right), (0, 0)))
    patches = sliding_window_view(hp, K, axis=1).reshape(B * T, C * K)
    out = patches @ w.reshape(F, C * K).T + b
    return out.reshape(B, T, F), patches


def _conv_backward(dout, patches, w, T):
    B = dout.shape[0]
    F, C, K = w.shape
    left, _ = _pads(K)
    d2 = dout.reshape(B * T, F)
    dw = (d2.T @ patches).reshape(F, C, K)
    db = d2.sum(axis=0)
    dp = (d2 @ w.reshape(F, C * K)).reshape(B, T, C, K)
    dhp = np.zeros((B, T + K - 1, C))
    for k in range(K):
        dhp[:, k:k + T, :] += dp[:, :, :, k]
    return dhp[:, left:left + T, :], dw, db


def _as_batch(windows) -> tuple[np.ndarray, bool]:
    x = np.asarray(windows, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3:
        raise ShapeError(f"expected (M, W) or (B, M, W) window, got shape {x.shape}")
    return x, single


def _check(x, params: EncoderParams):
    if x.shape[1] != params.n_channels:
        raise ShapeError(f"window has {x.shape[1]} channels, encoder expects {params.n_channels}")
    if x.shape[2] < CONV1_WIDTH:
        raise ShapeError(f"window length {x.shape[2]} shorter than kernel width {CONV1_WIDTH}")


def encode_batch(windows, params: EncoderParams) -> tuple[np.ndarray, dict]:
    """Encode ``(B, M, W)`` windows into ``(B, d)`` features plus a backward cache."""
    x, _ = _as_batch(windows)
    _check(x, params)
    p = params.arrays
    B, _, T = x.shape
    xt = x.transpose(0, 2, 1)
    z1, patches1 = _conv_forward(xt, p["conv1_w"], p["conv1_b"])
    a1 = np.maximum(z1, 0.0)
    z2, patches2 = _conv_forward(a1, p["conv2_w"], p["conv2_b"])
    a2 = np.maximum(z2, 0.0)
    pooled = a2.mean(axis=1)

    H = HIDDEN
    wh = p["gru_wh"]
    gx = a2 @ p["gru_wx"] + p["gru_b"]          # (B, T, 3H)
    h = np.zeros((B, H))
    hs, zs, rs, ns = [h], [], [], []
    for t in range(T):
        ghzr = h @ wh[:, :2 * H]
        z = expit(gx[:, t, :H] + ghzr[:, :H])
        r = expit(gx[:, t, H:2 * H] + ghzr[:, H:])
        n = np.tanh(gx[:, t, 2 * H:] + (r * h) @ wh[:, 2 * H:])
        h = (1.0 - z) * n + z * h
        zs.append(z)
        rs.append(r)
        ns.append(n)
        hs.append(h)

    concat = np.concatenate([pooled, h], axis=1)
    feats = concat @ p["proj_w"] + p["proj_b"]
    cache = dict(T=T, z1=z1, patches1=patches1, z2=z2, patches2=patches2, a2=a2,
                 hs=hs, zs=zs, rs=rs, ns=ns, concat=concat)
    return feats, cache


def backward_batch(cache: dict, upstream: np.ndarray,
                   params: EncoderParams) -> tuple[EncoderParams, np.ndarray]:
    """Gradients of ``sum(upstream * features)`` w.r.t. params and windows."""
    p = params.arrays
    T, H = cache["T"], HIDDEN
    upstream = np.asarray(upstream, dtype=np.float64)
    grads = {}
    grads["proj_w"] = cache["concat"].T @ upstream
    grads["proj_b"] = upstream.sum(axis=0)
    dconcat = upstream @ p["proj_w"].T
    dpooled, dh = dconcat[:, :CONV2_FILTERS], dconcat[:, CONV2_FILTERS:].copy()

    wh = p["gru_wh"]
    a2 = cache["a2"]
    dgx = np.empty((a2.shape[0], T, 3 * H))
    dwh = np.zeros_like(wh)
    hs, zs, rs, ns = cache["hs"], cache["zs"], cache["rs"], cache["ns"]
    for t in range(T - 1, -1, -1):
        h_prev, z, r, n = hs[t], zs[t], rs[t], ns[t]
        dn_pre = dh * (1.0 - z) * (1.0 - n * n)
        dz_pre = dh * (h_prev - n) * z * (1.0 - z)
        dh_prev = dh * z
        rh = r * h_prev
        dwh[:, 2 * H:] += rh.T @ dn_pre
        drh = dn_pre @ wh[:, 2 * H:].T
        dr_pre = drh * h_prev * r * (1.0 - r)
        dh_prev += drh * r
        dzr = np.concatenate([dz_pre, dr_pre], axis=1)
        dwh[:, :2 * H] += h_prev.T @ dzr
        dh_prev += dzr @ wh[:, :2 * H].T
        dgx[:, t, :2 * H] = dzr
        dgx[:, t, 2 * H:] = dn_pre
        dh = dh_prev
    grads["gru_wh"] = dwh
    flat = dgx.reshape(-1, 3 * H)
    grads["gru_wx"] = a2.reshape(-1, CONV2_FILTERS).T @ flat
    grads["gru_b"] = flat.sum(axis=0)

    da2 = dgx @ p["gru_wx"].T + dpooled[:, None, :] / T
    dz2 = da2 * (cache["z2"] > 0)
    da1, grads["conv2_w"], grads["conv2_b"] = _conv_backward(
        dz2, cache["patches2"], p["conv2_w"], T)
    dz1 = da1 * (cache["z1"] > 0)
    dxt, grads["conv1_w"], grads["conv1_b"] = _conv_backward(
        dz1, cache["patches1"], p["conv1_w"], T)
    return EncoderParams({k: grads[k] for k in PARAM_NAMES}), dxt.transpose(0, 2, 1)


def encode(window, params: EncoderParams) -> np.ndarray:
    """Feature vector for one ``(M, W)`` window."""
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected an (M, W) window, got shape {x.shape}")
    return encode_batch(x[None], params)[0][0]


def encode_backward(window, params: EncoderParams,
                    upstream_grad) -> tuple[EncoderParams, np.ndarray]:
    x = np.asarray(window, dtype=np.float64)
    g = np.asarray(upstream_grad, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected an (M, W) window, got shape {x.shape}")
    if g.shape != (params.dim,):
        raise ShapeError(f"upstream gradient shape {g.shape} != ({params.dim},)")
    _, cache = encode_batch(x[None], params)
    grads, dx = backward_batch(cache, g[None], params)
    return grads, dx[0]
