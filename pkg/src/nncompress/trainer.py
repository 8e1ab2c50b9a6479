"""Training loop: MSE loss, Adam, and the epoch/batch schedule."""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np
from threadpoolctl import threadpool_limits

from . import kvtext
from .coords import QuasiSampler
from .features import FourierBasis, make_basis
from .gridfield import GridField4D, sample_values, weighted_mean_sphere
from .network import (
    ModelConfig,
    ModelParams,
    ScalingTable,
    backward,
    build_scaling_table,
    forward,
    global_scaling_table,
    init_params,
    model_inputs,
    normalize_target,
    predict,
)

log = logging.getLogger(__name__)


class TrainingDivergence(FloatingPointError):
    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 512
    samples_per_epoch: int | None = None  # None: number of grid points
    epochs: int = 20
    seed: int = 0
    log_every: int = 1000
    val_slices: int = 4
    workers: int = 1

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        for name in ("learning_rate", "beta1", "beta2", "eps", "epochs", "log_every", "val_slices", "workers"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (self.beta1 < 1 and self.beta2 < 1):
            raise ValueError("Adam betas must be below 1")
        if self.samples_per_epoch is not None and self.samples_per_epoch < self.batch_size:
            raise ValueError("samples_per_epoch must be at least one batch")

    def steps_per_epoch(self, field: GridField4D) -> int:
        spe = field.size if self.samples_per_epoch is None else self.samples_per_epoch
        return spe // self.batch_size

    def total_steps(self, field: GridField4D) -> int:
        return self.epochs * self.steps_per_epoch(field)

    def digest(self) -> str:
        pairs = {k: v for k, v in asdict(self).items() if v is not None and k != "workers"}
        return hashlib.sha256(kvtext.dumps(pairs).encode()).hexdigest()[:16]


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.weights.items()},
                   {k: np.zeros_like(p) for k, p in params.weights.items()})


@dataclass
class History:
    losses: list = dc_field(default_factory=list)
    wrmse: list = dc_field(default_factory=list)  # (step, weighted RMSE on validation slices)

    @property
    def steps(self) -> int:
        return len(self.losses)


@dataclass
class TrainResult:
    params: ModelParams
    table: ScalingTable
    basis: FourierBasis
    history: History
    config: ModelConfig


def mse_loss(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("empty batch")
    diff = pred - target
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff


def adam_step(state: AdamState, params: ModelParams, grads: dict, cfg: TrainConfig):
    """One bias-corrected Adam update, applied in place; returns ``(params, state)``."""
    bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise FloatingPointError(f"non-finite gradients in {', '.join(bad)} at step {state.step + 1}")
    if set(grads) != set(params.weights):
        raise ValueError("gradient keys do not match parameters")
    for k, g in grads.items():
        if g.shape != params.weights[k].shape:
            raise ValueError(f"shape mismatch for {k}: {g.shape} vs {params.weights[k].shape}")
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    lr = cfg.learning_rate
    for k, p in params.weights.items():
        g = grads[k].astype(p.dtype, copy=False)
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return params, state


def validation_slices(field: GridField4D, k: int) -> list[tuple[int, int]]:
    pairs = [(it, ip) for it in range(field.shape[0]) for ip in range(field.shape[1])]
    if k >= len(pairs):
        return pairs
    idx = np.linspace(0, len(pairs) - 1, k).round().astype(int)
    return [pairs[i] for i in idx]


def slice_wrmse(field, params, config, basis, table, slices) -> float:
    lat, lon = np.meshgrid(field.lats, field.lons, indexing="ij")
    sq = []
    for it, ip in slices:
        pred = predict(params, config, basis, table, field.times[it], field.pressures[ip], lat, lon)
        err = pred.reshape(lat.shape) - field.values[it, ip].astype(np.float64)
        sq.append(err * err)
    return float(np.sqrt(weighted_mean_sphere(np.stack(sq), field.lats)))


def _targets(field, t, pi, psi, phi, pool, workers):
    if pool is None:
        return sample_values(field, t, pi, psi, phi)
    out = np.empty(t.shape)
    parts = [slice(k, None, workers) for k in range(workers)]
    results = pool.map(lambda s: sample_values(field, t[s], pi[s], psi[s], phi[s]), parts)
    for s, r in zip(parts, results):
        out[s] = r
    return out


def seeds_for(seed: int) -> tuple[int, int, int]:
    """Independent (init, basis, sampler) seeds derived from one training seed."""
    a, b, c = np.random.SeedSequence(seed).generate_state(3)
    return int(a), int(b), int(c)


def train(field: GridField4D, mcfg: ModelConfig, tcfg: TrainConfig, out=None) -> TrainResult:
    """Overfit the network to ``field``.

    ``out`` is an optional text stream receiving ``step=.. loss=.. wrmse=..``
    progress lines every ``log_every`` steps.
    """
    config = mcfg.resolved_for(field)
    init_seed, basis_seed, sampler_seed = seeds_for(tcfg.seed)
    params = init_params(config, init_seed)
    basis = make_basis(config.m, config.sigma, basis_seed)
    table = build_scaling_table(field) if config.use_scaling else global_scaling_table(field)
    sampler = QuasiSampler(sampler_seed, field.shape[1])
    state = AdamState.zeros_like(params)
    history = History()
    slices = validation_slices(field, tcfg.val_slices)
    n_steps = tcfg.total_steps(field)
    if n_steps < 1:
        raise ValueError("configuration yields zero optimizer steps")
    workers = tcfg.workers
    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    initial = None
    try:
        with threadpool_limits(limits=workers, user_api="blas"):
            for step in range(1, n_steps + 1):
                t, pi, psi, phi = sampler.next_batch(tcfg.batch_size, field)
                target = _targets(field, t, pi, psi, phi, pool, workers)
                p = field.pressures[pi]
                y = normalize_target(table, p, psi, target)
                v = model_inputs(config, t, p, psi, phi)
                raw, cache = forward(params, config, basis, v, "train")
                loss, d_raw = mse_loss(raw, y)
                if not np.isfinite(loss):
                    raise TrainingDivergence("non-finite loss", step)
                if initial is None:
                    initial = max(loss, 1e-30)
                elif loss > 1e6 * initial:
                    raise TrainingDivergence(f"loss {loss:.3g} exceeds 1e6 x initial {initial:.3g}", step)
                grads = backward(params, config, cache, d_raw)
                try:
                    adam_step(state, params, grads, tcfg)
                except FloatingPointError as exc:
                    raise TrainingDivergence(str(exc), step) from None
                history.losses.append(loss)
                if step % tcfg.log_every == 0 or step == n_steps:
                    w = slice_wrmse(field, params, config, basis, table, slices)
                    history.wrmse.append((step, w))
                    line = f"step={step} loss={loss!r} wrmse={w!r}"
                    log.info(line)
                    if out is not None:
                        print(line, file=out, flush=True)
    finally:
        if pool is not None:
            pool.shutdown()
    return TrainResult(params, table, basis, history, config)
