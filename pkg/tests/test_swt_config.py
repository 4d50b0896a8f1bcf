import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from swotcal import calnet, config, swt
from swotcal.fieldgen import Field2D
from swotcal.scale_space import decompose, default_scales
from swotcal.swath_geom import SwathField, build_swath_grid

GRID = build_swath_grid(16, 2, 10, 16)


def test_layout():
    data = swt.encode("demo", {"a": np.arange(6.0).reshape(2, 3), "b": np.array([1.5])}, {"x": 1})
    head, rest = data.split(b"\n", 2)[1], data.split(b"\n", 2)[2]
    assert data.startswith(b"SWT1\n")
    header = json.loads(head)
    assert header == {"kind": "demo", "dtype": "f64le", "names": ["a", "b"], "dims": [[2, 3], [1]], "meta": {"x": 1}}
    assert len(rest) == 8 * 7
    assert np.array_equal(np.frombuffer(rest, "<f8"), np.r_[np.arange(6.0), 1.5])


@given(arrays(np.float64, st.tuples(st.integers(0, 4), st.integers(1, 5)),
              elements=st.floats(allow_nan=True, allow_infinity=True, width=64)))
def test_roundtrip_bitwise(a):
    header, out = swt.decode(swt.encode("k", {"a": a}))
    assert out["a"].tobytes() == np.ascontiguousarray(a).tobytes()
    assert header["dims"] == [list(a.shape)]


def test_identical_content_identical_bytes():
    a = {"v": np.linspace(0, 1, 9)}
    assert swt.encode("k", a, {"b": 1, "a": 2}) == swt.encode("k", a, {"a": 2, "b": 1})


@pytest.mark.parametrize("data,msg", [
    (b"NOPE\n{}\n", "magic"),
    (b"SWT1\n{\"kind\":", "truncated"),
    (b"SWT1\nnot json\n", "JSON"),
    (b"SWT1\n[1]\n", "object"),
    (b"SWT1\n{\"dtype\":\"f32le\"}\n", "dtype"),
    (b"SWT1\n{\"dtype\":\"f64le\",\"names\":[\"a\"],\"dims\":[[2]]}\n" + b"\0" * 8, "payload"),
])
def test_decode_errors(data, msg):
    with pytest.raises(swt.SwtFormatError, match=msg):
        swt.decode(data)


def test_typed_roundtrips(tmp_path, rng):
    sw = SwathField(GRID, rng.standard_normal(GRID.shape))
    swt.write_field(tmp_path / "s.swt", sw)
    back = swt.read_field(tmp_path / "s.swt")
    assert back.grid == GRID and np.array_equal(back.values, sw.values)

    f2 = Field2D(rng.standard_normal((5, 7)), 3.0)
    swt.write_field(tmp_path / "f.swt", f2)
    back = swt.read_field(tmp_path / "f.swt")
    assert back.pixel_km == 3.0 and np.array_equal(back.values, f2.values)

    stack = decompose(sw, default_scales(3, 8))
    swt.write_stack(tmp_path / "st.swt", stack)
    back = swt.read_stack(tmp_path / "st.swt")
    assert back.scales == stack.scales and np.array_equal(back.bands, stack.bands)

    with pytest.raises(swt.SwtFormatError):
        swt.read_stack(tmp_path / "f.swt")
    with pytest.raises(swt.SwtFormatError):
        calnet.load_model(tmp_path / "f.swt")


def test_atomic_write_leaves_no_temp(tmp_path):
    swt.write(tmp_path / "x.swt", "k", {"a": np.zeros(3)})
    assert sorted(p.name for p in tmp_path.iterdir()) == ["x.swt"]


# -- config -------------------------------------------------------------------------

def test_defaults_resolve():
    cfg = config.resolve({})
    assert cfg == config.DEFAULTS and cfg is not config.DEFAULTS
    assert cfg["errors"]["roll"] == {"edge_std_m": 0.5, "corr_km": 500.0}


def test_partial_override_keeps_other_defaults():
    cfg = config.resolve({"field": {"nx": 320}, "errors": {"roll": {"edge_std_m": 0.1}}})
    assert cfg["field"]["nx"] == 320 and cfg["field"]["ny"] == 640
    assert cfg["errors"]["roll"] == {"edge_std_m": 0.1, "corr_km": 500.0}
    # listing errors replaces the set: unlisted kinds are disabled
    assert set(cfg["errors"]) == {"roll"}


@pytest.mark.parametrize("text,needle", [
    ('{\n "feild": {}\n}', "'feild' (line 2)"),
    ('{\n "field": {\n  "nx": 64,\n  "spectral_slop": 4\n }\n}', "field.spectral_slop (line 4)"),
    ('{"errors": {"orbit": {}}}', "'orbit'"),
    ('{"gridded_preset": "duacs"}', "duacs"),
    ('{"gridded_preset": {"name": "x"}}', "needs keys"),
])
def test_unknown_keys_named(tmp_path, text, needle):
    p = tmp_path / "c.json"
    p.write_text(text)
    with pytest.raises(config.ConfigError) as info:
        config.load(p)
    assert needle in str(info.value)


def test_json_syntax_error_has_line(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n "seed": 1,\n}')
    with pytest.raises(config.ConfigError, match="line 3"):
        config.load(p)


def test_config_hash_stable():
    a = config.resolve({"seed": 3, "scales": "5x32"})
    b = config.resolve({"scales": "5x32", "seed": 3})
    assert config.config_hash(a) == config.config_hash(b)
    assert config.config_hash(a) != config.config_hash(config.resolve({}))
