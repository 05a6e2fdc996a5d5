"""Binary acoustic-feature files.

Layout: magic "FFSV", then version, frame count, feature dim, and hop in
milliseconds as unsigned 32-bit little-endian words, then frames x dim
IEEE-754 32-bit little-endian values in row-major order. The format is
endian-fixed so files round-trip byte-identically across hosts. F0 tracks
use the same container with dim=1 (Hz).
"""

from __future__ import annotations

import os
import struct

import numpy as np

__all__ = ["FeatureFileError", "read_features", "write_features", "FEATURE_MAGIC"]

FEATURE_MAGIC = b"FFSV"
_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


class FeatureFileError(ValueError):
    """Malformed or truncated feature file."""


def write_features(path: str | os.PathLike, frames: np.ndarray, hop_ms: int = 10) -> None:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 1:
        frames = frames[:, None]
    if frames.ndim != 2:
        raise FeatureFileError(f"features must be 2-d, got shape {frames.shape}")
    t, dim = frames.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, _VERSION, t, dim, hop_ms))
        fh.write(frames.astype("<f4").tobytes(order="C"))


def read_features(path: str | os.PathLike) -> tuple[np.ndarray, int]:
    """Returns (frames[T x dim] as float64, hop_ms)."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise FeatureFileError(f"{path}: truncated header")
        magic, version, t, dim, hop_ms = _HEADER.unpack(header)
        if magic != FEATURE_MAGIC:
            raise FeatureFileError(f"{path}: bad magic {magic!r}")
        if version != _VERSION:
            raise FeatureFileError(f"{path}: unsupported version {version}")
        payload = fh.read()
    expected = t * dim * 4
    if len(payload) != expected:
        raise FeatureFileError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(t, dim).astype(np.float64)
    return data, hop_ms
