"""Coordinate normalization and the equal-area quasi-random training sampler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import cosdg, sindg

_BITS = 32

# Joe & Kuo direction numbers for the first three Sobol' dimensions:
# (degree s, polynomial coefficients a, initial m values).
_JOE_KUO = [
    None,  # van der Corput
    (1, 0, (1,)),
    (2, 1, (1, 3)),
]


@dataclass
class NormalizedCoord:
    t_hat: np.ndarray
    p_hat: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def as_array(self, dtype=np.float64) -> np.ndarray:
        """Stack into an ``(n, 5)`` array ``[t_hat, p_hat, x, y, z]``."""
        cols = np.broadcast_arrays(*(np.asarray(c, dtype=np.float64) for c in
                                     (self.t_hat, self.p_hat, self.x, self.y, self.z)))
        return np.stack([c.reshape(-1) for c in cols], axis=1).astype(dtype)


def normalize(t, p, psi, phi, c_t: float, c_p: float) -> NormalizedCoord:
    """Scale time/pressure and embed (lat, lon) in degrees onto the unit sphere.

    Longitude is wrapped into [0, 360) first, so 0 and 360 give bit-identical
    output; at the poles every longitude maps to (0, 0, +-1).
    """
    if not (c_t > 0 and c_p > 0):
        raise ValueError("normalization constants must be positive")
    psi = np.asarray(psi, dtype=np.float64)
    phi = np.mod(np.asarray(phi, dtype=np.float64), 360.0)
    cpsi = cosdg(psi)
    # + 0.0 folds signed zeros so the poles collapse bitwise
    x = cpsi * cosdg(phi) + 0.0
    y = cpsi * sindg(phi) + 0.0
    z = sindg(psi) + 0.0
    return NormalizedCoord(np.asarray(t, dtype=np.float64) / c_t, np.asarray(p, dtype=np.float64) / c_p, x, y, z)


def latlon_features(psi, phi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spatial inputs used when the XYZ transform is switched off: radians, zero-padded."""
    psi = np.deg2rad(np.asarray(psi, dtype=np.float64))
    phi = np.deg2rad(np.mod(np.asarray(phi, dtype=np.float64), 360.0)) - np.pi
    return psi, phi, np.zeros(np.broadcast(psi, phi).shape)


def sphere_from_unit_square(u1, u2):
    """Area-preserving map of the unit square onto (lat, lon) in radians."""
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    psi = 0.5 * np.pi - np.arccos(1.0 - 2.0 * u2)
    phi = 2.0 * np.pi * u1
    return psi, phi


# ---------------------------------------------------------------------------
# scrambled Sobol' sequence


def _direction_numbers() -> np.ndarray:
    v = np.zeros((len(_JOE_KUO), _BITS), dtype=np.uint64)
    for d, params in enumerate(_JOE_KUO):
        if params is None:
            m = [1] * _BITS
        else:
            s, a, m0 = params
            m = list(m0)
            for k in range(s, _BITS):
                new = m[k - s] ^ (m[k - s] << s)
                for i in range(1, s):
                    if (a >> (s - 1 - i)) & 1:
                        new ^= m[k - i] << i
                m.append(new)
        for k in range(_BITS):
            v[d, k] = m[k] << (_BITS - 1 - k)
    return v.astype(np.uint32)


_V = _direction_numbers()


def sobol_bits(index, dim: int) -> np.ndarray:
    """Unscrambled 32-bit Sobol' integers for the given sequence indices."""
    index = np.asarray(index, dtype=np.uint64)
    out = np.zeros(index.shape, dtype=np.uint32)
    for k in range(_BITS):
        bit = ((index >> np.uint64(k)) & np.uint64(1)).astype(np.uint32)
        out ^= _V[dim, k] * bit
    return out


def _reverse_bits(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint32)
    x = ((x >> 1) & 0x55555555) | ((x & 0x55555555) << 1)
    x = ((x >> 2) & 0x33333333) | ((x & 0x33333333) << 2)
    x = ((x >> 4) & 0x0F0F0F0F) | ((x & 0x0F0F0F0F) << 4)
    x = ((x >> 8) & 0x00FF00FF) | ((x & 0x00FF00FF) << 8)
    return ((x >> 16) | (x << 16)).astype(np.uint32)


def owen_scramble(x: np.ndarray, seed: int) -> np.ndarray:
    """Hash-based nested uniform scramble of 32-bit digits.

    After bit reversal every step only lets lower bits influence higher ones,
    so each output digit is the input digit flipped by a function of the more
    significant digits -- Owen's nested structure with hashed flips.
    """
    x = _reverse_bits(x)
    x = x + np.uint32(seed & 0xFFFFFFFF)
    x ^= x * np.uint32(0x6C50B47C)
    x ^= x * np.uint32(0xB82F1E52)
    x ^= x * np.uint32(0xC7AFE638)
    x ^= x * np.uint32(0x8D22F6E6)
    return _reverse_bits(x)


def splitmix64(x) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = np.asarray(x, dtype=np.uint64) + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31))


def scrambled_sobol(index, seed: int, dims: int = 3) -> np.ndarray:
    """Points in [0, 1)^dims for arbitrary sequence indices (random access)."""
    index = np.asarray(index, dtype=np.uint64)
    keys = splitmix64(splitmix64(seed & 0xFFFFFFFFFFFFFFFF) + np.arange(1, dims + 1, dtype=np.uint64))
    cols = []
    for d in range(dims):
        bits = owen_scramble(sobol_bits(index, d), int(keys[d] >> np.uint64(32)))
        cols.append(bits.astype(np.float64) * 2.0**-32)
    return np.stack(cols, axis=-1)


def level_choice(index, seed: int, n_levels: int) -> np.ndarray:
    """Counter-based uniform choice of a pressure level for each sequence index."""
    key = splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ np.uint64(0x5DEECE66D))
    h = splitmix64(np.asarray(index, dtype=np.uint64) ^ key)
    u = (h >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return np.minimum((u * n_levels).astype(np.intp), n_levels - 1)


class QuasiSampler:
    """Stateful equal-area sampler over (time, level, lat, lon).

    Sobol' dimensions 0 and 1 drive longitude and latitude (their 2D
    projection is a (0, 2)-sequence), dimension 2 drives time.  Level
    indices come from a separate counter-based stream.
    """

    def __init__(self, seed: int, n_levels: int, start: int = 0):
        if n_levels < 1:
            raise ValueError("n_levels must be positive")
        self.seed = int(seed)
        self.n_levels = int(n_levels)
        self.index = int(start)

    def points_at(self, indices, t0: float, t1: float):
        """(t, p_index, psi_deg, phi_deg) for explicit sequence indices."""
        u = scrambled_sobol(indices, self.seed)
        psi, phi = sphere_from_unit_square(u[..., 0], u[..., 1])
        t = t0 + u[..., 2] * (t1 - t0)
        return t, level_choice(indices, self.seed, self.n_levels), np.rad2deg(psi), np.rad2deg(phi)

    def next_batch(self, n: int, field, worker: int = 0, workers: int = 1):
        """Advance by ``n`` sequence indices and return this worker's share.

        Worker ``k`` of ``W`` takes the indices congruent to ``k`` mod ``W``, so
        the union over workers is exactly the serial batch.
        """
        if n <= 0:
            raise ValueError("batch size must be positive")
        idx = np.arange(self.index, self.index + n, dtype=np.uint64)
        self.index += n
        if workers > 1:
            idx = idx[worker::workers]
        return self.points_at(idx, float(field.times[0]), float(field.times[-1]))
