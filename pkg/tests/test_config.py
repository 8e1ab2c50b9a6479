import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nncompress import kvtext
from nncompress.ablation import NAMED, TABLE_ROWS, apply_flags, resolve_rows
from nncompress.config import ConfigError, build_configs
from nncompress.network import ModelConfig


@settings(max_examples=100, deadline=None)
@given(st.dictionaries(st.from_regex(r"[a-z][a-z0-9_.]{0,10}", fullmatch=True),
                       st.floats(allow_nan=False, allow_infinity=False), max_size=8))
def test_float_pairs_round_trip_exactly(pairs):
    back = kvtext.loads(kvtext.dumps(pairs))
    assert {k: float(v) for k, v in back.items()} == pairs


def test_canonical_text():
    text = kvtext.dumps({"b": [1.5, 2.0], "a": True, "c": 3})
    assert text == "a=true\nb=1.5,2.0\nc=3\n"
    assert kvtext.loads("# comment\n\n a = x=y \n") == {"a": "x=y"}
    with pytest.raises(kvtext.KVError):
        kvtext.loads("a=1\na=2\n")
    with pytest.raises(kvtext.KVError):
        kvtext.loads("no equals sign\n")


def test_profiles():
    mcfg, tcfg = build_configs({"profile": "full"})
    assert (mcfg.d, mcfg.widths[0], mcfg.m, mcfg.sigma) == (12, 512, 128, 1.6)
    assert (tcfg.learning_rate, tcfg.epochs) == (3e-4, 20)
    mcfg, tcfg = build_configs({})
    assert (mcfg.d, mcfg.widths[0], mcfg.m) == (4, 64, 32)
    assert tcfg.epochs * (tcfg.samples_per_epoch // tcfg.batch_size) == 50_000


def test_overrides_and_errors():
    mcfg, tcfg = build_configs({"width": "32", "use_skip": "off", "c_t": "auto", "activation": "ReLU"}, seed=7)
    assert mcfg.widths == (32,) * 4 and not mcfg.use_skip and mcfg.c_t is None and mcfg.activation == "relu"
    assert tcfg.seed == 7
    for bad in ({"bogus": "1"}, {"profile": "huge"}, {"d": "x"}, {"batch_size": "1"}):
        with pytest.raises(ConfigError):
            build_configs(bad)


def test_ablation_rows():
    assert len(TABLE_ROWS) == 11 and TABLE_ROWS[11] == NAMED["full"]
    assert [label for label, _ in resolve_rows("9, no_fourier")] == ["9", "no_fourier"]
    assert len(resolve_rows(None)) == 11
    cfg = apply_flags(ModelConfig.uniform(2, 8), NAMED["no_scaling"])
    assert not cfg.use_scaling and cfg.use_fourier and cfg.activation == "gelu"
    with pytest.raises(ValueError):
        resolve_rows("12")
