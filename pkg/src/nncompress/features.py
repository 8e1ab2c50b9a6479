"""Gaussian Fourier features with a block-diagonal projection matrix.

The projection has three blocks: time (m x 1), pressure (m x 1) and the
spatial triple (m x 3), so the only cross terms are among x, y and z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class FourierBasis:
    m: int
    sigma: float
    seed: int
    B_t: np.ndarray  # (m, 1)
    B_p: np.ndarray  # (m, 1)
    B_xyz: np.ndarray  # (m, 3)

    @property
    def n_features(self) -> int:
        return 6 * self.m

    def flat(self) -> np.ndarray:
        return np.concatenate([self.B_t.ravel(), self.B_p.ravel(), self.B_xyz.ravel()]).astype(np.float32)

    @classmethod
    def from_flat(cls, m: int, sigma: float, seed: int, flat: np.ndarray) -> "FourierBasis":
        flat = np.asarray(flat, dtype=np.float32)
        if flat.size != 5 * m:
            raise ValueError(f"basis needs {5 * m} entries, got {flat.size}")
        return cls(m, sigma, seed, flat[:m].reshape(m, 1), flat[m : 2 * m].reshape(m, 1), flat[2 * m :].reshape(m, 3))

    def same_as(self, other: "FourierBasis") -> bool:
        return self.m == other.m and np.array_equal(self.flat(), other.flat())


def make_basis(m: int, sigma: float, seed: int) -> FourierBasis:
    if m < 1:
        raise ValueError("m must be at least 1")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    rng = np.random.default_rng(seed)
    b_t = rng.normal(0.0, sigma, size=(m, 1)).astype(np.float32)
    b_p = rng.normal(0.0, sigma, size=(m, 1)).astype(np.float32)
    b_xyz = rng.normal(0.0, sigma, size=(m, 3)).astype(np.float32)
    return FourierBasis(m, float(sigma), int(seed), b_t, b_p, b_xyz)


def project(basis: FourierBasis, v: np.ndarray) -> np.ndarray:
    """Blocked product B v for a batch ``v`` of shape (n, 5); returns (n, 3m)."""
    v = np.asarray(v)
    dt = v.dtype if v.dtype in (np.float32, np.float64) else np.float64
    v = v.astype(dt, copy=False)
    b_t = basis.B_t[:, 0].astype(dt)
    b_p = basis.B_p[:, 0].astype(dt)
    b_xyz = basis.B_xyz.astype(dt)
    # explicit sums rather than a BLAS call: per-row results must not depend on batch shape
    spatial = v[:, 2:3] * b_xyz[:, 0] + v[:, 3:4] * b_xyz[:, 1] + v[:, 4:5] * b_xyz[:, 2]
    return np.concatenate([v[:, 0:1] * b_t, v[:, 1:2] * b_p, spatial], axis=1)


def encode(basis: FourierBasis, v: np.ndarray) -> np.ndarray:
    """Fourier features ``[cos(Bv), sin(Bv)]``, shape (n, 6m)."""
    proj = project(basis, v)
    return np.concatenate([np.cos(proj), np.sin(proj)], axis=1)
