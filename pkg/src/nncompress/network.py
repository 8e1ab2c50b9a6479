"""FCBlock MLP: parameters, forward pass, analytic backward pass, output scaling.

Parameters live in plain ``dict[str, ndarray]`` mappings with a canonical
order given by :func:`param_layout`; the same order is used for Adam state
and for the artifact's weight section.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace

import numpy as np
from scipy.special import ndtr

from .coords import latlon_features, normalize
from .features import FourierBasis, encode
from .gridfield import GridField4D

TOGGLES = ("use_scaling", "use_xyz", "use_fourier", "use_skip", "use_batchnorm")
ACTIVATIONS = ("gelu", "relu")

_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))


@dataclass(frozen=True)
class ModelConfig:
    d: int = 12
    widths: tuple = (512,) * 12
    m: int = 128
    sigma: float = 1.6
    c_t: float | None = None  # None: resolved from the field
    c_p: float | None = None
    activation: str = "gelu"
    use_scaling: bool = True
    use_xyz: bool = True
    use_fourier: bool = True
    use_skip: bool = True
    use_batchnorm: bool = True
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        widths = self.widths
        if isinstance(widths, (int, np.integer)):
            widths = (int(widths),) * self.d
        widths = tuple(int(w) for w in widths)
        object.__setattr__(self, "widths", widths)
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if len(widths) != self.d:
            raise ValueError(f"expected {self.d} widths, got {len(widths)}")
        if min(widths) < 1:
            raise ValueError("widths must be positive")
        if self.use_skip and len(set(widths)) != 1:
            raise ValueError("skip connections need a uniform width")
        if self.m < 1 or not self.sigma > 0:
            raise ValueError("m must be >= 1 and sigma > 0")
        for name in ("c_t", "c_p"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @classmethod
    def uniform(cls, d: int, width: int, **kw) -> "ModelConfig":
        return cls(d=d, widths=(width,) * d, **kw)

    @property
    def n_inputs(self) -> int:
        return 6 * self.m if self.use_fourier else 5

    def resolved_for(self, field: GridField4D, c_t: float | None = None, c_p: float | None = None) -> "ModelConfig":
        """Fill normalization constants from a field: time-domain length and top pressure."""
        c_t = self.c_t if c_t is None else c_t
        c_p = self.c_p if c_p is None else c_p
        if c_t is None:
            span = float(field.times[-1] - field.times[0])
            c_t = span if span > 0 else 1.0
        if c_p is None:
            c_p = float(field.pressures.max())
        return replace(self, c_t=c_t, c_p=c_p)


@dataclass
class ModelParams:
    weights: dict = dc_field(default_factory=dict)  # trainable tensors
    stats: dict = dc_field(default_factory=dict)  # batch-norm running mean / var

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.weights.items()}, {k: v.copy() for k, v in self.stats.items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams({k: v.astype(dtype) for k, v in self.weights.items()},
                           {k: v.astype(dtype) for k, v in self.stats.items()})

    def n_trainable(self) -> int:
        return int(sum(v.size for v in self.weights.values()))


def param_layout(config: ModelConfig) -> list[tuple[str, tuple]]:
    """Trainable tensors in canonical order."""
    layout = [("in.W", (config.n_inputs, config.widths[0])), ("in.b", (config.widths[0],))]
    w_prev = config.widths[0]
    for i, w in enumerate(config.widths):
        for j, fan_in in ((1, w_prev), (2, w)):
            layout += [(f"blk{i}.l{j}.W", (fan_in, w)), (f"blk{i}.l{j}.b", (w,))]
            if config.use_batchnorm:
                layout += [(f"blk{i}.bn{j}.gamma", (w,)), (f"blk{i}.bn{j}.beta", (w,))]
        w_prev = w
    layout += [("out.W", (w_prev, 1)), ("out.b", (1,))]
    return layout


def stats_layout(config: ModelConfig) -> list[tuple[str, tuple]]:
    if not config.use_batchnorm:
        return []
    out = []
    for i, w in enumerate(config.widths):
        for j in (1, 2):
            out += [(f"blk{i}.bn{j}.mean", (w,)), (f"blk{i}.bn{j}.var", (w,))]
    return out


def param_count(config: ModelConfig) -> int:
    return int(sum(np.prod(shape) for _, shape in param_layout(config)))


def init_params(config: ModelConfig, seed: int, dtype=np.float32) -> ModelParams:
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in param_layout(config):
        kind = name.rsplit(".", 1)[1]
        if kind == "W":
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            weights[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
        elif kind == "gamma":
            weights[name] = np.ones(shape, dtype=dtype)
        else:
            weights[name] = np.zeros(shape, dtype=dtype)
    stats = {}
    for name, shape in stats_layout(config):
        stats[name] = (np.zeros if name.endswith(".mean") else np.ones)(shape, dtype=dtype)
    return ModelParams(weights, stats)


# ---------------------------------------------------------------------------
# activations


def gelu(x):
    """Exact GELU, x * Phi(x) with the normal CDF (no tanh approximation)."""
    x = np.asarray(x)
    return x * ndtr(x)


def gelu_grad(x, cdf=None):
    x = np.asarray(x)
    if cdf is None:
        cdf = ndtr(x)
    return cdf + x * (np.exp(-0.5 * x * x) * _INV_SQRT_2PI)


def _act(name, x):
    """Activation plus whatever the backward pass can reuse."""
    if name == "gelu":
        cdf = ndtr(x)
        return x * cdf, cdf
    return np.maximum(x, 0), None


def _act_grad(name, x, aux):
    return gelu_grad(x, aux) if name == "gelu" else (x > 0).astype(x.dtype)


# ---------------------------------------------------------------------------
# forward / backward


def model_inputs(config: ModelConfig, t, p, psi, phi, dtype=np.float32) -> np.ndarray:
    """Raw coordinates (hours, hPa, degrees) -> (n, 5) network inputs."""
    if config.c_t is None or config.c_p is None:
        raise ValueError("normalization constants unresolved; call ModelConfig.resolved_for(field)")
    v = normalize(t, p, psi, phi, config.c_t, config.c_p)
    if not config.use_xyz:
        v.x, v.y, v.z = latlon_features(psi, phi)
    return v.as_array(dtype)


def _bn_forward(z, gamma, beta, stats, prefix, config, mode):
    if mode == "train":
        n = z.shape[0]
        mu = z.mean(axis=0)
        var = z.var(axis=0)
        mom = config.bn_momentum
        rm, rv = stats[prefix + ".mean"], stats[prefix + ".var"]
        rm *= 1 - mom
        rm += mom * mu
        rv *= 1 - mom
        rv += mom * var * (n / (n - 1))
    else:
        mu = stats[prefix + ".mean"]
        var = stats[prefix + ".var"]
    invstd = 1.0 / np.sqrt(var + config.bn_eps)
    xhat = (z - mu) * invstd
    return gamma * xhat + beta, (xhat, invstd)


def _bn_backward(dy, gamma, bn_cache):
    xhat, invstd = bn_cache
    n = dy.shape[0]
    dgamma = np.sum(dy * xhat, axis=0)
    dbeta = np.sum(dy, axis=0)
    dxhat = dy * gamma
    dz = (invstd / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0))
    return dz, dgamma, dbeta


def forward(params: ModelParams, config: ModelConfig, basis: FourierBasis | None, v, mode: str = "infer"):
    """Evaluate the network on inputs ``v`` (n, 5).

    Returns ``(raw, cache)``.  ``mode="train"`` uses batch statistics and
    updates the running statistics in ``params.stats`` in place.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    W = params.weights
    dtype = W["in.W"].dtype
    v = np.asarray(v, dtype=dtype)
    if v.ndim != 2 or v.shape[1] != 5 or v.shape[0] == 0:
        raise ValueError(f"expected a nonempty (n, 5) batch, got {v.shape}")
    if mode == "train" and v.shape[0] < 2:
        raise ValueError("train mode needs a batch of at least 2 for batch statistics")

    x = encode(basis, v) if config.use_fourier else v
    h = x @ W["in.W"] + W["in.b"]
    act = config.activation
    blocks = []
    for i in range(config.d):
        c = {"h": h}
        inp = h
        for j in (1, 2):
            pre = f"blk{i}"
            z = inp @ W[f"{pre}.l{j}.W"] + W[f"{pre}.l{j}.b"]
            c[f"in{j}"] = inp
            if config.use_batchnorm:
                z, c[f"bn{j}"] = _bn_forward(z, W[f"{pre}.bn{j}.gamma"], W[f"{pre}.bn{j}.beta"],
                                             params.stats, f"{pre}.bn{j}", config, mode)
            c[f"pre{j}"] = z
            inp, c[f"aux{j}"] = _act(act, z)
        h = h + inp if config.use_skip else inp
        blocks.append(c)
    raw = (h @ W["out.W"])[:, 0] + W["out.b"][0]
    cache = {"mode": mode, "x": x, "blocks": blocks, "h_last": h, "layout": [n for n, _ in param_layout(config)]}
    return raw, cache


def backward(params: ModelParams, config: ModelConfig, cache: dict, d_raw) -> dict:
    """Gradients of the loss w.r.t. every trainable tensor, given dL/d(raw)."""
    if cache.get("mode") != "train":
        raise ValueError("backward needs the cache of a train-mode forward pass")
    if cache["layout"] != list(params.weights):
        raise ValueError("cache was produced with a different parameter layout")
    W = params.weights
    dtype = W["in.W"].dtype
    d_raw = np.asarray(d_raw, dtype=dtype).reshape(-1, 1)
    grads = {}
    grads["out.W"] = cache["h_last"].T @ d_raw
    grads["out.b"] = d_raw.sum(axis=0)
    dh = d_raw @ W["out.W"].T
    act = config.activation
    for i in reversed(range(config.d)):
        c = cache["blocks"][i]
        pre = f"blk{i}"
        dout = dh
        for j in (2, 1):
            dz = dout * _act_grad(act, c[f"pre{j}"], c[f"aux{j}"])
            if config.use_batchnorm:
                dz, grads[f"{pre}.bn{j}.gamma"], grads[f"{pre}.bn{j}.beta"] = _bn_backward(
                    dz, W[f"{pre}.bn{j}.gamma"], c[f"bn{j}"])
            grads[f"{pre}.l{j}.W"] = c[f"in{j}"].T @ dz
            grads[f"{pre}.l{j}.b"] = dz.sum(axis=0)
            dout = dz @ W[f"{pre}.l{j}.W"].T
        dh = dh + dout if config.use_skip else dout
    grads["in.W"] = cache["x"].T @ dh
    grads["in.b"] = dh.sum(axis=0)
    return {name: grads[name] for name in W}


# ---------------------------------------------------------------------------
# output scaling


@dataclass(frozen=True, eq=False)
class ScalingTable:
    """Per-(pressure, latitude) mean and half-range, interpolated bilinearly."""

    pressures: np.ndarray
    lats: np.ndarray
    mean: np.ndarray  # (n_p, n_lat) float32
    range: np.ndarray  # (n_p, n_lat) float32, > 0

    def __post_init__(self):
        shape = (np.size(self.pressures), np.size(self.lats))
        if np.shape(self.mean) != shape or np.shape(self.range) != shape:
            raise ValueError(f"scaling table arrays must have shape {shape}")
        if not np.all(np.asarray(self.range) > 0):
            raise ValueError("scaling ranges must be strictly positive")

    def same_as(self, other: "ScalingTable") -> bool:
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in ("pressures", "lats", "mean", "range"))


def range_floor(values: np.ndarray) -> float:
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        return 1e-6 * (hi - lo)
    return 1e-6 * max(abs(hi), 1.0)


def build_scaling_table(field: GridField4D) -> ScalingTable:
    v = field.values.astype(np.float64)
    mean = v.mean(axis=(0, 3))
    half = 0.5 * (v.max(axis=(0, 3)) - v.min(axis=(0, 3)))
    eps = range_floor(v)
    rng32 = np.maximum(half, eps).astype(np.float32)
    rng32 = np.maximum(rng32, np.float32(eps))
    return ScalingTable(field.pressures.copy(), field.lats.copy(), mean.astype(np.float32), rng32)


def global_scaling_table(field: GridField4D) -> ScalingTable:
    """Single-stratum table: one global mean and half-range."""
    v = field.values.astype(np.float64)
    half = max(0.5 * (v.max() - v.min()), range_floor(v))
    return ScalingTable(np.array([float(field.pressures.mean())]), np.array([0.0]),
                        np.array([[v.mean()]], dtype=np.float32), np.array([[half]], dtype=np.float32))


def _axis_weights(coord: np.ndarray, x: np.ndarray):
    if coord.size == 1:
        z = np.zeros(x.shape, dtype=np.intp)
        return z, z, np.zeros(x.shape)
    x = np.clip(x, coord[0], coord[-1])
    i = np.clip(np.searchsorted(coord, x, side="right") - 1, 0, coord.size - 2)
    f = (x - coord[i]) / (coord[i + 1] - coord[i])
    return i, i + 1, f


def interp_table(table: ScalingTable, p, psi):
    """Bilinear (mean*, range*) at (p, psi), clamped outside the table."""
    p, psi = np.broadcast_arrays(np.asarray(p, dtype=np.float64), np.asarray(psi, dtype=np.float64))
    i0, i1, fp = _axis_weights(np.asarray(table.pressures, dtype=np.float64), p)
    j0, j1, fl = _axis_weights(np.asarray(table.lats, dtype=np.float64), psi)
    out = []
    for arr in (np.asarray(table.mean, dtype=np.float64), np.asarray(table.range, dtype=np.float64)):
        lo = (1.0 - fl) * arr[i0, j0] + fl * arr[i0, j1]
        hi = (1.0 - fl) * arr[i1, j0] + fl * arr[i1, j1]
        out.append((1.0 - fp) * lo + fp * hi)
    return out[0], out[1]


def apply_scaling(table: ScalingTable | None, p, psi, raw, enabled: bool = True):
    """``mean*(p, psi) + range*(p, psi) * raw``; identity when disabled."""
    raw = np.asarray(raw, dtype=np.float64)
    if not enabled or table is None:
        return raw
    mean, rng = interp_table(table, p, psi)
    return mean + rng * raw


def normalize_target(table: ScalingTable | None, p, psi, target, enabled: bool = True):
    """Inverse of :func:`apply_scaling`: the target the raw head is trained on."""
    target = np.asarray(target, dtype=np.float64)
    if not enabled or table is None:
        return target
    mean, rng = interp_table(table, p, psi)
    return (target - mean) / rng


# ---------------------------------------------------------------------------
# inference


EVAL_CHUNK = 512


def predict(params: ModelParams, config: ModelConfig, basis: FourierBasis | None, table: ScalingTable | None,
            t, p, psi, phi, chunk: int = EVAL_CHUNK) -> np.ndarray:
    """Scaled infer-mode outputs at raw coordinates, evaluated in fixed-size chunks.

    Every chunk is padded to exactly ``chunk`` rows so each point goes through
    identically shaped matrix products; results are therefore bit-identical
    regardless of how the caller batches or orders its points.
    """
    t, p, psi, phi = (np.asarray(a, dtype=np.float64).reshape(-1) for a in np.broadcast_arrays(t, p, psi, phi))
    n = t.size
    out = np.empty(n, dtype=np.float64)
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        v = model_inputs(config, t[sl], p[sl], psi[sl], phi[sl], dtype=params.weights["in.W"].dtype)
        k = v.shape[0]
        if k < chunk:
            v = np.concatenate([v, np.repeat(v[:1], chunk - k, axis=0)])
        raw, _ = forward(params, config, basis, v, "infer")
        out[sl] = raw[:k]
    return apply_scaling(table, p, psi, out)
