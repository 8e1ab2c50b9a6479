import struct
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nncompress.artifact import (
    HALF_TINY,
    ArtifactCorrupt,
    ArtifactError,
    ArtifactVersionError,
    QuantizationOverflow,
    compression_ratio,
    dequantize,
    deserialize,
    from_bytes,
    make_artifact,
    quantize,
    serialize,
    to_bytes,
)
from nncompress.features import make_basis
from nncompress.gridfield import GridSpec
from nncompress.network import ModelConfig, ModelParams, build_scaling_table, init_params

from conftest import make_field


def fake_result(seed=0, **kw):
    field = make_field(seed=seed)
    cfg = ModelConfig.uniform(2, 16, m=8, **kw).resolved_for(field)
    params = init_params(cfg, seed)
    rng = np.random.default_rng(seed)
    for v in params.stats.values():
        v += np.abs(rng.normal(size=v.shape)).astype(np.float32)
    return SimpleNamespace(params=params, config=cfg, basis=make_basis(8, 1.6, seed),
                           table=build_scaling_table(field)), field


def test_exact_halves_survive():
    p = ModelParams({"a": np.array([0.5, 1.0, -2.0, 0.0, 65504.0], np.float32)}, {})
    assert np.array_equal(dequantize(quantize(p)).weights["a"], p.weights["a"])


def test_relative_error_bound():
    w = np.random.default_rng(0).uniform(-1, 1, 100_000).astype(np.float32)
    w = w[np.abs(w) >= 2.0**-14]  # normal half range
    back = dequantize(quantize(ModelParams({"a": w}, {}))).weights["a"]
    assert np.max(np.abs(back - w) / np.abs(w)) <= 2.0**-11


def test_round_to_nearest_even():
    # 1 + 2^-11 is the midpoint between 1 and 1 + 2^-10: ties to even -> 1
    w = np.array([1 + 2**-11, 1 + 3 * 2**-11], np.float32)
    assert quantize(ModelParams({"a": w}, {})).weights["a"].tolist() == [1.0, 1 + 2 * 2**-10]


def test_overflow_names_tensor():
    p = ModelParams({"good": np.zeros(3, np.float32), "bad": np.array([1e6], np.float32)}, {})
    with pytest.raises(QuantizationOverflow, match="bad"):
        quantize(p)
    with pytest.raises(QuantizationOverflow):
        quantize(ModelParams({"n": np.array([np.nan], np.float32)}, {}))


def test_zero_blob_and_variance_floor():
    p = ModelParams({"a": np.zeros(4, np.float32)}, {"x.mean": np.zeros(2, np.float32), "x.var": np.zeros(2, np.float32)})
    back = dequantize(quantize(p))
    assert not back.weights["a"].any() and not back.stats["x.mean"].any()
    assert np.all(back.stats["x.var"] == np.float32(HALF_TINY))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-60000, 60000, width=32), min_size=1, max_size=64),
       st.lists(st.floats(0, 1000, width=32), min_size=1, max_size=8))
def test_quantize_idempotent(values, variances):
    p = ModelParams({"a": np.array(values, np.float32)}, {"b.var": np.array(variances, np.float32)})
    q1 = quantize(p)
    q2 = quantize(dequantize(q1))
    assert q1.weights["a"].tobytes() == q2.weights["a"].tobytes()
    assert q1.stats["b.var"].tobytes() == q2.stats["b.var"].tobytes()


def test_serialize_round_trip_byte_exact(tmp_path):
    res, field = fake_result()
    art = make_artifact(res, field, "abc123")
    path = tmp_path / "a.nncw"
    n = serialize(art, path)
    assert n == path.stat().st_size
    back = deserialize(path)
    assert to_bytes(back) == path.read_bytes()
    assert back.config == art.config and back.grid.same_as(field.grid)
    assert back.basis.same_as(art.basis) and back.table.same_as(art.table)
    assert back.train_digest == "abc123" and back.name == field.name


@pytest.mark.parametrize("toggles", [{"use_batchnorm": False}, {"use_fourier": False, "use_xyz": False},
                                     {"activation": "relu", "use_scaling": False}])
def test_round_trip_variants(toggles):
    res, field = fake_result(**toggles)
    data = to_bytes(make_artifact(res, field))
    assert to_bytes(from_bytes(data)) == data


def test_crc_detects_flipped_bytes():
    res, field = fake_result()
    data = to_bytes(make_artifact(res, field))
    rng = np.random.default_rng(0)
    # positions in the header and in each payload section
    for pos in [14, 40] + list(rng.integers(len(data) - 2000, len(data), 20)):
        bad = bytearray(data)
        bad[pos] ^= 0x10
        with pytest.raises(ArtifactError):
            from_bytes(bytes(bad))
    bad = bytearray(data)
    bad[-1] ^= 1
    with pytest.raises(ArtifactCorrupt):
        from_bytes(bytes(bad))


def test_version_and_magic_and_truncation():
    res, field = fake_result()
    data = to_bytes(make_artifact(res, field))
    with pytest.raises(ArtifactVersionError):
        from_bytes(data[:4] + struct.pack("<I", 2) + data[8:])
    with pytest.raises(ArtifactError):
        from_bytes(b"ABCD" + data[4:])
    for cut in (3, 20, len(data) // 2, len(data) - 1):
        with pytest.raises(ArtifactError):
            from_bytes(data[:cut])


def test_header_rebuilds_network_shape():
    res, field = fake_result()
    back = from_bytes(to_bytes(make_artifact(res, field)))
    assert back.config.widths == (16, 16) and back.config.m == 8
    assert back.config.c_t == res.config.c_t and back.config.c_p == res.config.c_p
    assert set(back.params().weights) == set(res.params.weights)


def test_compression_ratio(tmp_path):
    path = tmp_path / "blob"
    grid = GridSpec(np.arange(2.0), np.array([500.0]), np.array([0.0, 1.0]), np.array([0.0, 90.0, 180.0]))
    path.write_bytes(b"\0" * grid.nbytes)
    assert compression_ratio(grid, path) == 1.0
    big = GridSpec(np.arange(8.0), np.array([500.0]), np.array([0.0, 1.0]), np.array([0.0, 90.0, 180.0]))
    assert compression_ratio(big, path) == 4.0 * compression_ratio(grid, path)
