"""Decompression: evaluate the stored network at arbitrary coordinates."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from threadpoolctl import threadpool_limits

from .artifact import CompressedArtifact
from .gridfield import ErrorReport, GridField4D, GridSpec, OutOfDomainError, error_report
from .network import EVAL_CHUNK, predict


class Decoder:
    """Dequantized model plus bookkeeping; safe to share for concurrent reads.

    ``rows_evaluated`` counts network rows actually pushed through the MLP
    (including chunk padding), for cost accounting.
    """

    def __init__(self, artifact: CompressedArtifact, chunk: int = EVAL_CHUNK):
        self.artifact = artifact
        self.params = artifact.params()
        self.chunk = chunk
        self.rows_evaluated = 0

    def check_domain(self, t, p, psi):
        g = self.artifact.grid
        if np.any(~np.isfinite(t)) or np.any(t < g.times[0]) or np.any(t > g.times[-1]):
            raise OutOfDomainError(f"time outside [{g.times[0]}, {g.times[-1]}]")
        if np.any(~np.isfinite(p)) or np.any(p < g.pressures[0]) or np.any(p > g.pressures[-1]):
            raise OutOfDomainError(f"pressure outside [{g.pressures[0]}, {g.pressures[-1]}]")
        if np.any(~np.isfinite(psi)) or np.any(np.abs(psi) > 90):
            raise OutOfDomainError("latitude outside [-90, 90]")

    def _eval_range(self, t, p, psi, phi):
        a = self.artifact
        return predict(self.params, a.config, a.basis, a.table, t, p, psi, phi, chunk=self.chunk)

    def eval(self, t, p, psi, phi, workers: int = 1) -> np.ndarray:
        t, p, psi, phi = (np.asarray(x, dtype=np.float64).reshape(-1) for x in np.broadcast_arrays(t, p, psi, phi))
        if not np.all(np.isfinite(phi)):
            raise OutOfDomainError("non-finite longitude")
        self.check_domain(t, p, psi)
        n = t.size
        self.rows_evaluated += -(-n // self.chunk) * self.chunk
        if workers <= 1 or n <= self.chunk:
            return self._eval_range(t, p, psi, phi)
        # split on chunk boundaries so every row sees the same padded shapes
        n_chunks = -(-n // self.chunk)
        bounds = np.linspace(0, n_chunks, min(workers, n_chunks) + 1).round().astype(int) * self.chunk
        ranges = [slice(lo, min(hi, n)) for lo, hi in zip(bounds[:-1], bounds[1:])]
        out = np.empty(n)
        with threadpool_limits(limits=1, user_api="blas"), ThreadPoolExecutor(len(ranges)) as pool:
            parts = pool.map(lambda s: self._eval_range(t[s], p[s], psi[s], phi[s]), ranges)
            for s, r in zip(ranges, parts):
                out[s] = r
        return out


def eval_points(artifact: CompressedArtifact, coords, workers: int = 1) -> np.ndarray:
    """Decompressed values at ``coords``, an (n, 4) array of (t, p, lat, lon)."""
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 4)
    return Decoder(artifact).eval(coords[:, 0], coords[:, 1], coords[:, 2], coords[:, 3], workers=workers)


def refine_grid(grid: GridSpec, time: int = 1, lat: int = 1, lon: int = 1) -> GridSpec:
    """Denser grid containing the original points.

    Longitude is periodic, so its count is multiplied exactly; time and
    latitude gain ``factor - 1`` points inside each interval.
    """

    def inner(c, k):
        if k == 1 or c.size == 1:
            return c
        return np.concatenate([np.linspace(a, b, k, endpoint=False) for a, b in zip(c[:-1], c[1:])] + [c[-1:]])

    lons = grid.lons
    if lon > 1:
        ext = np.append(lons, lons[0] + 360.0)
        lons = np.concatenate([np.linspace(a, b, lon, endpoint=False) for a, b in zip(ext[:-1], ext[1:])])
        lons = lons[lons < 360.0]
    return GridSpec(inner(grid.times, time), grid.pressures, inner(grid.lats, lat), lons)


def reconstruct_grid(artifact: CompressedArtifact, grid: GridSpec | None = None, workers: int = 1,
                     decoder: Decoder | None = None) -> GridField4D:
    grid = artifact.grid if grid is None else grid
    dec = decoder or Decoder(artifact)
    lat, lon = np.meshgrid(grid.lats, grid.lons, indexing="ij")
    values = np.empty(grid.shape, dtype=np.float32)
    for it, t in enumerate(grid.times):
        for ip, p in enumerate(grid.pressures):
            values[it, ip] = dec.eval(t, p, lat, lon, workers=workers).reshape(lat.shape)
    return GridField4D.on_grid(grid, values, artifact.name, artifact.units)


def stats(artifact: CompressedArtifact, original: GridField4D, q: float = 0.99999, workers: int = 1) -> ErrorReport:
    if not original.grid.same_as(artifact.grid):
        raise ValueError("original field grid does not match the artifact header grid")
    return error_report(original, reconstruct_grid(artifact, workers=workers), q)
