import json

import numpy as np
import pytest

from conftest import small_profiles
from epsmode.cache import MAGIC, CacheError, config_hash, load_mode_cache, save_mode_cache, sidecar_path
from epsmode.modes import solve_modes


@pytest.fixture(scope="module")
def modes():
    return solve_modes(small_profiles()[1])


def test_roundtrip_is_bitwise(modes, tmp_path):
    path = save_mode_cache(modes, tmp_path / "m.epsm", "abc")
    back = load_mode_cache(path, "abc")
    assert back.omegas.tobytes() == modes.omegas.tobytes()
    assert back.fields.tobytes() == modes.fields.tobytes()
    assert back.eps.values.tobytes() == modes.eps.values.tobytes()
    assert back.metadata["config_hash"] == "abc"
    assert back.normalization == modes.normalization


def test_bad_magic_and_version(modes, tmp_path):
    path = save_mode_cache(modes, tmp_path / "m.epsm")
    data = bytearray(path.read_bytes())
    bad = tmp_path / "bad.epsm"
    bad.write_bytes(b"XXXX" + bytes(data[4:]))
    sidecar_path(bad).write_text(sidecar_path(path).read_text())
    with pytest.raises(CacheError, match="magic"):
        load_mode_cache(bad)
    data[4] += 1
    bad.write_bytes(bytes(data))
    with pytest.raises(CacheError, match="version"):
        load_mode_cache(bad)
    assert bytes(data[:4]) == MAGIC


def test_truncated_file(modes, tmp_path):
    path = save_mode_cache(modes, tmp_path / "m.epsm")
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(CacheError, match="bytes"):
        load_mode_cache(path)
    path.write_bytes(b"EPS")
    with pytest.raises(CacheError, match="truncated"):
        load_mode_cache(path)


def test_missing_sidecar(modes, tmp_path):
    path = save_mode_cache(modes, tmp_path / "m.epsm")
    sidecar_path(path).unlink()
    with pytest.raises(CacheError, match="sidecar"):
        load_mode_cache(path)


def test_hash_mismatch_and_force(modes, tmp_path):
    path = save_mode_cache(modes, tmp_path / "m.epsm", "one")
    with pytest.raises(CacheError, match="hash"):
        load_mode_cache(path, "two")
    back = load_mode_cache(path, "two", force=True)
    assert np.array_equal(back.omegas, modes.omegas)
    assert json.loads(sidecar_path(path).read_text())["config_hash"] == "one"


def test_config_hash_is_canonical():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
    with pytest.raises(ValueError):
        config_hash({"a": float("nan")})
