"""4D gridded fields over (time, pressure, latitude, longitude).

Holds the in-memory field type, the ``NNGF`` container format, the
interpolator used to produce training targets off the grid, and the
latitude-weighted error statistics.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

MAGIC = b"NNGF"
FORMAT_VERSION = 1


class FieldFormatError(ValueError):
    """Malformed field container; ``offset`` is the byte where reading failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class OutOfDomainError(ValueError):
    pass


def _as_coord(values, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.size > 1 and not np.all(np.diff(arr) > 0):
        raise ValueError(f"{name} must be strictly increasing")
    return arr


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Coordinate vectors of a 4D grid, without data."""

    times: np.ndarray
    pressures: np.ndarray
    lats: np.ndarray
    lons: np.ndarray

    def __post_init__(self):
        for name in ("times", "pressures", "lats", "lons"):
            object.__setattr__(self, name, _as_coord(getattr(self, name), name))
        if self.lats[0] < -90 or self.lats[-1] > 90:
            raise ValueError("latitudes must lie in [-90, 90]")
        if self.lons[0] < 0 or self.lons[-1] >= 360:
            raise ValueError("longitudes must lie in [0, 360)")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.times.size, self.pressures.size, self.lats.size, self.lons.size)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def nbytes(self) -> int:
        """Payload size of a float32 field on this grid."""
        return 4 * self.size

    def same_as(self, other: "GridSpec") -> bool:
        return all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in ("times", "pressures", "lats", "lons")
        )


@dataclass(frozen=True, eq=False)
class GridField4D:
    name: str
    units: str
    times: np.ndarray
    pressures: np.ndarray
    lats: np.ndarray
    lons: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = GridSpec(self.times, self.pressures, self.lats, self.lons)
        for name in ("times", "pressures", "lats", "lons"):
            object.__setattr__(self, name, getattr(grid, name))
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} does not match coordinates {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("values contain non-finite entries")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def on_grid(cls, grid: GridSpec, values, name: str = "", units: str = "") -> "GridField4D":
        return cls(name, units, grid.times, grid.pressures, grid.lats, grid.lons, values)

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.times, self.pressures, self.lats, self.lons)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.values.shape

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def nbytes(self) -> int:
        return 4 * self.size


# ---------------------------------------------------------------------------
# container format


def _pack_text(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def field_to_bytes(field: GridField4D) -> bytes:
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), _pack_text(field.name), _pack_text(field.units)]
    parts.append(struct.pack("<4Q", *field.shape))
    for coord in (field.times, field.pressures, field.lats, field.lons):
        parts.append(coord.astype("<f8").tobytes())
    payload = field.values.astype("<f4").tobytes()
    parts.append(payload)
    parts.append(struct.pack("<I", zlib.crc32(payload)))
    return b"".join(parts)


def store_field(field: GridField4D, path) -> None:
    if not str(path):
        raise OSError("empty output path")
    data = field_to_bytes(field)
    with open(path, "wb") as f:
        f.write(data)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FieldFormatError(
                f"truncated while reading {what}: need {n} bytes, {len(self.data) - self.pos} left", self.pos
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def text(self, what: str) -> str:
        (n,) = struct.unpack("<I", self.take(4, f"{what} length"))
        start = self.pos
        try:
            return self.take(n, what).decode("utf-8")
        except UnicodeDecodeError:
            raise FieldFormatError(f"{what} is not valid UTF-8", start) from None


def field_from_bytes(data: bytes) -> GridField4D:
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise FieldFormatError("bad magic, not an NNGF field container", 0)
    (version,) = struct.unpack("<I", r.take(4, "version"))
    if version != FORMAT_VERSION:
        raise FieldFormatError(f"unsupported format version {version}", 4)
    name = r.text("name")
    units = r.text("units")
    dims_at = r.pos
    dims = struct.unpack("<4Q", r.take(32, "dimensions"))
    if any(n == 0 for n in dims):
        raise FieldFormatError(f"zero-sized dimension in {dims}", dims_at)
    coords = []
    for n, label in zip(dims, ("times", "pressures", "lats", "lons")):
        at = r.pos
        vec = np.frombuffer(r.take(8 * n, label), dtype="<f8").astype(np.float64)
        try:
            _as_coord(vec, label)
        except ValueError as exc:
            raise FieldFormatError(str(exc), at) from None
        coords.append(vec)
    if coords[2][0] < -90 or coords[2][-1] > 90 or coords[3][0] < 0 or coords[3][-1] >= 360:
        raise FieldFormatError("latitude/longitude coordinates out of range", dims_at)
    npoints = int(np.prod(dims, dtype=np.uint64))
    payload_at = r.pos
    expected = 4 * npoints + 4
    remaining = len(data) - payload_at
    if remaining != expected:
        raise FieldFormatError(
            f"dimension mismatch: header implies {npoints} values ({expected} bytes incl. CRC), "
            f"file has {remaining} bytes",
            payload_at,
        )
    payload = r.take(4 * npoints, "payload")
    (crc,) = struct.unpack("<I", r.take(4, "crc"))
    if zlib.crc32(payload) != crc:
        raise FieldFormatError("payload CRC mismatch", payload_at)
    values = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)
    bad = np.flatnonzero(~np.isfinite(values.reshape(-1)))
    if bad.size:
        raise FieldFormatError("non-finite value in payload", payload_at + 4 * int(bad[0]))
    return GridField4D(name, units, *coords, values)


def load_field(path) -> GridField4D:
    with open(path, "rb") as f:
        data = f.read()
    return field_from_bytes(data)


# ---------------------------------------------------------------------------
# interpolation


def _bracket(coord: np.ndarray, x: np.ndarray):
    """Lower index and fraction for linear interpolation inside ``coord``."""
    n = coord.size
    if n == 1:
        return np.zeros(x.shape, dtype=np.intp), np.zeros(x.shape)
    i = np.searchsorted(coord, x, side="right") - 1
    i = np.clip(i, 0, n - 2)
    frac = (x - coord[i]) / (coord[i + 1] - coord[i])
    return i, np.clip(frac, 0.0, 1.0)


def _lon_bracket(lons: np.ndarray, phi: np.ndarray):
    n = lons.size
    ext = np.append(lons, lons[0] + 360.0)
    wrapped = np.mod(phi - lons[0], 360.0) + lons[0]
    j = np.clip(np.searchsorted(ext, wrapped, side="right") - 1, 0, n - 1)
    frac = (wrapped - ext[j]) / (ext[j + 1] - ext[j])
    return j, (j + 1) % n, np.clip(frac, 0.0, 1.0)


def sample_values(field: GridField4D, t, p_index, psi, phi) -> np.ndarray:
    """Vectorized :func:`sample_value`; returns float64."""
    t = np.asarray(t, dtype=np.float64)
    psi = np.asarray(psi, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    p_index = np.asarray(p_index, dtype=np.intp)
    t, p_index, psi, phi = np.broadcast_arrays(t, p_index, psi, phi)
    if np.any(t < field.times[0]) or np.any(t > field.times[-1]) or np.any(np.isnan(t)):
        raise OutOfDomainError(f"time outside [{field.times[0]}, {field.times[-1]}]")
    if np.any(p_index < 0) or np.any(p_index >= field.pressures.size):
        raise OutOfDomainError("pressure level index out of range")

    psi = np.clip(psi, field.lats[0], field.lats[-1])
    it, ft = _bracket(field.times, t)
    ii, fi = _bracket(field.lats, psi)
    j0, j1, fj = _lon_bracket(field.lons, phi)
    it1 = np.minimum(it + 1, field.times.size - 1)
    ii1 = np.minimum(ii + 1, field.lats.size - 1)

    v = field.values
    out = np.zeros(t.shape)
    for ti, wt in ((it, 1.0 - ft), (it1, ft)):
        for li, wl in ((ii, 1.0 - fi), (ii1, fi)):
            w = wt * wl
            out += w * ((1.0 - fj) * v[ti, p_index, li, j0] + fj * v[ti, p_index, li, j1])
    return out


def sample_value(field: GridField4D, t: float, p_index: int, psi: float, phi: float) -> float:
    """Trilinear interpolation in (t, lat, lon) at pressure level ``p_index``.

    Longitude is periodic; latitude is clamped to the outermost rows.
    """
    return float(sample_values(field, t, p_index, psi, phi))


# ---------------------------------------------------------------------------
# metrics


def latitude_weights(lats) -> np.ndarray:
    """Normalized cosine-of-latitude weights (sum to one)."""
    # extended precision, rounded once at the end, so cos(60) lands on exactly 0.5
    lats = np.asarray(lats, dtype=np.longdouble)
    w = np.clip(np.cos(np.deg2rad(lats)), 0.0, None)
    return (w / w.sum()).astype(np.float64)


@dataclass
class ErrorReport:
    weighted_rmse: float
    weighted_mae: float
    max_abs_error: float
    quantile: float
    quantile_value: float
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    per_location_mean: np.ndarray
    per_location_std: np.ndarray

    @property
    def abs_error_quantile(self) -> tuple[float, float]:
        return (self.quantile, self.quantile_value)

    def as_pairs(self) -> dict:
        return {
            "weighted_rmse": self.weighted_rmse,
            "weighted_mae": self.weighted_mae,
            "max_abs_error": self.max_abs_error,
            "quantile": self.quantile,
            "quantile_abs_error": self.quantile_value,
        }


def weighted_mean_sphere(values: np.ndarray, lats) -> float:
    """Cos-latitude weighted mean over the last two axes, plain mean over the rest."""
    w = latitude_weights(lats)
    nlon = values.shape[-1]
    per_slice = np.einsum("...ij,i->...", values, w) / nlon
    return float(np.mean(per_slice))


def error_report(original: GridField4D, reconstructed: GridField4D, q: float = 0.99999, bins: int = 100) -> ErrorReport:
    if original.shape != reconstructed.shape or not original.grid.same_as(reconstructed.grid):
        raise ValueError(f"grid mismatch: {original.shape} vs {reconstructed.shape}")
    if not 0.0 < q < 1.0:
        raise ValueError("quantile must lie in (0, 1)")
    err = reconstructed.values.astype(np.float64) - original.values.astype(np.float64)
    abs_err = np.abs(err)
    wrmse = np.sqrt(weighted_mean_sphere(err * err, original.lats))
    wmae = weighted_mean_sphere(abs_err, original.lats)
    emax = float(abs_err.max())
    span = emax if emax > 0 else 1.0
    counts, edges = np.histogram(err, bins=bins, range=(-span, span))
    return ErrorReport(
        weighted_rmse=float(wrmse),
        weighted_mae=wmae,
        max_abs_error=emax,
        quantile=q,
        quantile_value=float(np.quantile(abs_err, q)),
        hist_edges=edges,
        hist_counts=counts,
        per_location_mean=err.mean(axis=(0, 1)),
        per_location_std=err.std(axis=(0, 1)),
    )
