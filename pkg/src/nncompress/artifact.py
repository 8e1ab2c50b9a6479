"""Half-precision weight quantization and the ``NNCW`` artifact format.

Layout (little-endian)::

    "NNCW"  u32 version
    u32 header_len, header (canonical key=value text), u32 header CRC
    u32 n_sections, then per section:
        12-byte ASCII name (NUL padded), u64 offset, u64 length, u32 CRC
    section payloads: weights16, bnstats16, basis32, scaling32
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass, fields

import numpy as np

from . import kvtext
from .features import FourierBasis
from .gridfield import GridField4D, GridSpec
from .network import ModelConfig, ModelParams, ScalingTable, TOGGLES, param_layout, stats_layout

MAGIC = b"NNCW"
VERSION = 1
SECTIONS = ("weights16", "bnstats16", "basis32", "scaling32")
HALF_MAX = float(np.finfo(np.float16).max)
HALF_TINY = float(np.finfo(np.float16).tiny)  # smallest positive normal


class ArtifactError(ValueError):
    pass


class ArtifactCorrupt(ArtifactError):
    pass


class ArtifactVersionError(ArtifactError):
    pass


class QuantizationOverflow(ArtifactError):
    pass


@dataclass
class HalfBlob:
    weights: dict  # name -> float16 array
    stats: dict


def quantize(params: ModelParams) -> HalfBlob:
    """Round every tensor to float16 (round-to-nearest-even); never saturates."""
    bad = []
    for group in (params.weights, params.stats):
        for name, arr in group.items():
            a = np.asarray(arr, dtype=np.float64)
            if not np.all(np.isfinite(a)):
                bad.append(f"{name} (non-finite)")
            elif np.any(np.abs(a) > HALF_MAX):
                bad.append(f"{name} (max |x| = {np.abs(a).max():.6g})")
    if bad:
        raise QuantizationOverflow("tensors outside float16 range: " + ", ".join(bad))
    stats = {}
    for k, v in params.stats.items():
        h = np.asarray(v).astype(np.float16)
        # same floor as on load, so quantize(dequantize(b)) == b
        stats[k] = np.maximum(h, np.float16(HALF_TINY)) if k.endswith(".var") else h
    return HalfBlob({k: np.asarray(v).astype(np.float16) for k, v in params.weights.items()}, stats)


def dequantize(blob: HalfBlob) -> ModelParams:
    """Widen to float32 (exact); batch-norm variances floored at the smallest normal half."""
    weights = {k: v.astype(np.float32) for k, v in blob.weights.items()}
    stats = {}
    for k, v in blob.stats.items():
        s = v.astype(np.float32)
        if k.endswith(".var"):
            s = np.maximum(s, np.float32(HALF_TINY))
        stats[k] = s
    return ModelParams(weights, stats)


def pack_half(group: dict, layout) -> bytes:
    return b"".join(np.asarray(group[name], dtype="<f2").tobytes() for name, _ in layout)


def unpack_half(data: bytes, layout) -> dict:
    total = sum(int(np.prod(shape)) for _, shape in layout)
    if len(data) != 2 * total:
        raise ArtifactError(f"size mismatch: expected {2 * total} bytes of float16, got {len(data)}")
    flat = np.frombuffer(data, dtype="<f2").astype(np.float16)
    out, pos = {}, 0
    for name, shape in layout:
        n = int(np.prod(shape))
        out[name] = flat[pos : pos + n].reshape(shape).copy()
        pos += n
    return out


@dataclass(eq=False)
class CompressedArtifact:
    config: ModelConfig
    train_digest: str
    name: str
    units: str
    grid: GridSpec
    blob: HalfBlob
    basis: FourierBasis
    table: ScalingTable
    version: int = VERSION

    def params(self) -> ModelParams:
        return dequantize(self.blob)


def make_artifact(result, grid, train_digest: str = "", name: str = "", units: str = "") -> CompressedArtifact:
    """Package a :class:`~nncompress.trainer.TrainResult` (or anything with the
    same ``params/config/basis/table`` attributes)."""
    if isinstance(grid, GridField4D):
        name = name or grid.name
        units = units or grid.units
        grid = grid.grid
    return CompressedArtifact(result.config, train_digest, name, units, grid,
                              quantize(result.params), result.basis, result.table)


# ---------------------------------------------------------------------------
# header


def config_pairs(config: ModelConfig, prefix: str = "model.") -> dict:
    out = {}
    for f in fields(config):
        value = getattr(config, f.name)
        if value is None:
            continue
        out[prefix + f.name] = list(value) if f.name == "widths" else value
    return out


def config_from_pairs(pairs: dict, prefix: str = "model.") -> ModelConfig:
    kw = {}
    for f in fields(ModelConfig):
        key = prefix + f.name
        if key not in pairs:
            continue
        raw = pairs[key]
        if f.name == "widths":
            kw[f.name] = tuple(kvtext.parse_ints(raw))
        elif f.name in ("d", "m"):
            kw[f.name] = int(raw)
        elif f.name in TOGGLES:
            kw[f.name] = kvtext.parse_bool(raw)
        elif f.name == "activation":
            kw[f.name] = raw
        else:
            kw[f.name] = float(raw)
    return ModelConfig(**kw)


def header_pairs(art: CompressedArtifact) -> dict:
    pairs = config_pairs(art.config)
    pairs.update({
        "basis.seed": art.basis.seed,
        "train.digest": art.train_digest,
        "field.name": art.name,
        "field.units": art.units,
        "grid.times": art.grid.times,
        "grid.pressures": art.grid.pressures,
        "grid.lats": art.grid.lats,
        "grid.lons": art.grid.lons,
        "scaling.pressures": np.asarray(art.table.pressures, dtype=np.float64),
        "scaling.lats": np.asarray(art.table.lats, dtype=np.float64),
    })
    return pairs


# ---------------------------------------------------------------------------
# (de)serialization


def to_bytes(art: CompressedArtifact) -> bytes:
    cfg = art.config
    if art.basis.m != cfg.m:
        raise ArtifactError("basis size does not match model config")
    payloads = {
        "weights16": pack_half(art.blob.weights, param_layout(cfg)),
        "bnstats16": pack_half(art.blob.stats, stats_layout(cfg)),
        "basis32": art.basis.flat().astype("<f4").tobytes(),
        "scaling32": np.concatenate([np.asarray(art.table.mean, dtype="<f4").ravel(),
                                     np.asarray(art.table.range, dtype="<f4").ravel()]).tobytes(),
    }
    header = kvtext.dumps(header_pairs(art)).encode("utf-8")
    head = [MAGIC, struct.pack("<II", art.version, len(header)), header, struct.pack("<I", zlib.crc32(header)),
            struct.pack("<I", len(SECTIONS))]
    entry = struct.Struct("<12sQQI")
    offset = sum(len(b) for b in head) + entry.size * len(SECTIONS)
    table = []
    for name in SECTIONS:
        data = payloads[name]
        table.append(entry.pack(name.encode("ascii"), offset, len(data), zlib.crc32(data)))
        offset += len(data)
    return b"".join(head + table + [payloads[n] for n in SECTIONS])


def _need(data: bytes, end: int, what: str):
    if end > len(data):
        raise ArtifactError(f"truncated artifact while reading {what}")


def from_bytes(data: bytes) -> CompressedArtifact:
    _need(data, 12, "preamble")
    if data[:4] != MAGIC:
        raise ArtifactError("bad magic, not an NNCW artifact")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ArtifactVersionError(f"unsupported artifact version {version} (expected {VERSION})")
    _need(data, 12 + hlen + 8, "header")
    header = data[12 : 12 + hlen]
    (hcrc,) = struct.unpack_from("<I", data, 12 + hlen)
    if zlib.crc32(header) != hcrc:
        raise ArtifactCorrupt("header CRC mismatch")
    (nsec,) = struct.unpack_from("<I", data, 16 + hlen)
    entry = struct.Struct("<12sQQI")
    pos = 20 + hlen
    _need(data, pos + entry.size * nsec, "section table")
    sections = {}
    for _ in range(nsec):
        raw_name, off, length, crc = entry.unpack_from(data, pos)
        pos += entry.size
        name = raw_name.rstrip(b"\0").decode("ascii", "replace")
        _need(data, off + length, f"section {name}")
        chunk = data[off : off + length]
        if zlib.crc32(chunk) != crc:
            raise ArtifactCorrupt(f"CRC mismatch in section {name}")
        sections[name] = chunk
    missing = [s for s in SECTIONS if s not in sections]
    if missing:
        raise ArtifactError(f"missing sections: {missing}")

    try:
        pairs = kvtext.loads(header.decode("utf-8"))
        cfg = config_from_pairs(pairs)
        grid = GridSpec(*(kvtext.parse_floats(pairs[f"grid.{k}"]) for k in ("times", "pressures", "lats", "lons")))
        t_p = kvtext.parse_floats(pairs["scaling.pressures"])
        t_l = kvtext.parse_floats(pairs["scaling.lats"])
        seed = int(pairs["basis.seed"])
        digest, name, units = pairs["train.digest"], pairs["field.name"], pairs["field.units"]
    except (KeyError, ValueError, UnicodeDecodeError) as exc:
        raise ArtifactError(f"bad header: {exc}") from None

    blob = HalfBlob(unpack_half(sections["weights16"], param_layout(cfg)),
                    unpack_half(sections["bnstats16"], stats_layout(cfg)))
    if len(sections["basis32"]) != 4 * 5 * cfg.m:
        raise ArtifactError("basis section size mismatch")
    basis = FourierBasis.from_flat(cfg.m, cfg.sigma, seed, np.frombuffer(sections["basis32"], dtype="<f4"))
    n_tab = t_p.size * t_l.size
    scal = np.frombuffer(sections["scaling32"], dtype="<f4").astype(np.float32)
    if scal.size != 2 * n_tab:
        raise ArtifactError("scaling section size mismatch")
    table = ScalingTable(t_p, t_l, scal[:n_tab].reshape(t_p.size, t_l.size).copy(),
                         scal[n_tab:].reshape(t_p.size, t_l.size).copy())
    return CompressedArtifact(cfg, digest, name, units, grid, blob, basis, table, version)


def serialize(art: CompressedArtifact, path) -> int:
    data = to_bytes(art)
    with open(path, "wb") as f:
        f.write(data)
    return len(data)


def deserialize(path) -> CompressedArtifact:
    with open(path, "rb") as f:
        return from_bytes(f.read())


def compression_ratio(field, artifact_path) -> float:
    """Original float32 payload bytes over artifact file bytes.

    ``field`` may be a :class:`GridField4D` or a bare :class:`GridSpec`.
    """
    return field.nbytes / os.path.getsize(artifact_path)
