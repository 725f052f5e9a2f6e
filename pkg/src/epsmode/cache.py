"""Binary mode cache with a JSON sidecar.

Layout (all little-endian)::

    b"EPSM"                      magic
    uint32                       format version
    3 x uint32                   grid dims
    3 x float64                  box lengths
    uint32                       mode count
    count x float64              frequencies
    count*3*Nx*Ny*Nz x complex128  fields, row-major (mode, component, x, y, z)

The sidecar ``<path>.json`` records the config hash, normalization and
phase tags, and the profile samples needed to rebuild the mode set.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .dielectric import DielectricProfile
from .geometry import Grid
from .modes import ModeSet

MAGIC = b"EPSM"
VERSION = 1
_HEADER = struct.Struct("<4sI3I3dI")


class CacheError(ValueError):
    pass


def config_hash(payload) -> str:
    """sha256 of the canonical JSON form of ``payload``."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


def sidecar_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_mode_cache(modes: ModeSet, path: Union[str, Path], hash_value: str = "") -> Path:
    path = Path(path)
    grid = modes.grid
    header = _HEADER.pack(MAGIC, VERSION, *grid.dims, *grid.lengths, len(modes))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(modes.omegas.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(modes.fields, dtype="<c16").tobytes())
    eps = modes.eps
    sidecar = {
        "config_hash": hash_value,
        "normalization": modes.normalization,
        "phase_convention": modes.phase_convention,
        "degeneracy_tol": modes.degeneracy_tol,
        "eps_min": eps.eps_min,
        "band_limit": list(eps.band_limit),
        "eps_values": eps.values.real.reshape(-1).tolist(),
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=1))
    return path


def load_mode_cache(
    path: Union[str, Path], expected_hash: Optional[str] = None, force: bool = False
) -> ModeSet:
    """Read a cache written by :func:`save_mode_cache`.

    A config-hash mismatch is an error unless ``force`` is set.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise CacheError(f"{path}: truncated header")
    magic, version, nx, ny, nz, lx, ly, lz, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CacheError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CacheError(f"{path}: unsupported cache version {version} (expected {VERSION})")
    grid = Grid((nx, ny, nz), (lx, ly, lz))
    n_fields = count * 3 * grid.n_total
    expected = _HEADER.size + 8 * count + 16 * n_fields
    if len(data) != expected:
        raise CacheError(f"{path}: expected {expected} bytes, found {len(data)}")
    side_file = sidecar_path(path)
    if not side_file.exists():
        raise CacheError(f"{side_file}: missing sidecar")
    side = json.loads(side_file.read_text())
    if expected_hash is not None and side.get("config_hash") != expected_hash and not force:
        raise CacheError(f"{path}: config hash mismatch (use --force to accept)")
    offset = _HEADER.size
    omegas = np.frombuffer(data, "<f8", count, offset).astype(float)
    offset += 8 * count
    fields = np.frombuffer(data, "<c16", n_fields, offset).astype(complex)
    fields = fields.reshape((count,) + grid.vector_shape)
    values = np.asarray(side["eps_values"], dtype=float).reshape(grid.dims)
    eps = DielectricProfile(grid, values, side["eps_min"], tuple(side["band_limit"]))
    return ModeSet(
        eps,
        omegas,
        fields,
        side["degeneracy_tol"],
        side["normalization"],
        side["phase_convention"],
        {"config_hash": side.get("config_hash", "")},
    )
