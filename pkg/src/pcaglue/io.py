"""Binary readers and writers for frames, fields, bases and strain images.

Every file starts with a 4-byte magic and a little-endian ``u16`` version,
followed by ``m: u32`` and ``l: u32``. Planes are stored as ``m*l`` float32
values, sample index fastest. Singular values of a basis are float64.

Only samples are persisted for frames; spacing metadata has no slot in the
format and is dropped.
"""

from __future__ import annotations

import os
import struct
from typing import Tuple, Union

import numpy as np

from .types import (
    DisplacementField,
    PrincipalBasis,
    RFFrame,
    StrainImage,
    ValidationError,
    flatten,
    unflatten,
)

PathLike = Union[str, os.PathLike]

VERSION = 1
FRAME_MAGIC = b"ELRF"
FIELD_MAGIC = b"ELDF"
BASIS_MAGIC = b"ELPB"
STRAIN_MAGIC = b"ELSF"

_HEADER = struct.Struct("<4sHII")
_F32 = np.dtype("<f4")
_F64 = np.dtype("<f8")
# Guard against absurd headers before allocating anything.
MAX_ELEMENTS = 1 << 31


class FormatError(ValidationError):
    """Malformed file. ``offset`` is the byte position where parsing failed."""

    def __init__(self, message: str, offset: int, path=None):
        where = f"{path}: " if path is not None else ""
        super().__init__(f"{where}{message} (at byte offset {offset})")
        self.offset = offset
        self.path = path


class _Reader:
    def __init__(self, data: bytes, path=None):
        self.data = data
        self.pos = 0
        self.path = path

    def fail(self, message, offset=None):
        raise FormatError(message, self.pos if offset is None else offset, self.path)

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            self.fail(f"truncated payload: need {n} bytes for {what}, {len(self.data) - self.pos} left")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, st: struct.Struct, what: str):
        return st.unpack(self.take(st.size, what))

    def array(self, dtype: np.dtype, count: int, what: str) -> np.ndarray:
        start = self.pos
        raw = self.take(dtype.itemsize * count, what)
        arr = np.frombuffer(raw, dtype=dtype).astype(np.float64)
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            self.fail(f"non-finite value in {what}", start + int(bad[0]) * dtype.itemsize)
        return arr

    def header(self, magic: bytes) -> Tuple[int, int]:
        got, version, m, l = self.unpack(_HEADER, "header")
        if got != magic:
            self.fail(f"bad magic {got!r}, expected {magic!r}", 0)
        if version != VERSION:
            self.fail(f"unsupported version {version}", 4)
        if m == 0 or l == 0 or m * l > MAX_ELEMENTS:
            self.fail(f"invalid dimensions {m}x{l}", 6)
        return m, l

    def finish(self):
        if self.pos != len(self.data):
            self.fail(f"{len(self.data) - self.pos} trailing bytes after payload")


def _plane_bytes(plane: np.ndarray) -> bytes:
    return flatten(plane).astype(_F32).tobytes()


def _header(magic: bytes, m: int, l: int) -> bytes:
    return _HEADER.pack(magic, VERSION, m, l)


def _read(path: PathLike) -> _Reader:
    with open(path, "rb") as fh:
        return _Reader(fh.read(), path)


def _write(path: PathLike, payload: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(payload)


# -- frames -----------------------------------------------------------------

def frame_to_bytes(frame: RFFrame) -> bytes:
    return _header(FRAME_MAGIC, frame.m, frame.l) + _plane_bytes(frame.samples)


def frame_from_bytes(data: bytes, path=None) -> RFFrame:
    r = _Reader(data, path)
    m, l = r.header(FRAME_MAGIC)
    samples = r.array(_F32, m * l, "samples")
    r.finish()
    return RFFrame(unflatten(samples, m, l))


def save_frame(frame: RFFrame, path: PathLike) -> None:
    _write(path, frame_to_bytes(frame))


def load_frame(path: PathLike) -> RFFrame:
    return frame_from_bytes(_read(path).data, path)


# -- displacement fields ------------------------------------------------------

def field_to_bytes(fld: DisplacementField) -> bytes:
    m, l = fld.shape
    return _header(FIELD_MAGIC, m, l) + _plane_bytes(fld.axial) + _plane_bytes(fld.lateral)


def field_from_bytes(data: bytes, path=None) -> DisplacementField:
    r = _Reader(data, path)
    m, l = r.header(FIELD_MAGIC)
    axial = r.array(_F32, m * l, "axial plane")
    lateral = r.array(_F32, m * l, "lateral plane")
    r.finish()
    return DisplacementField(unflatten(axial, m, l), unflatten(lateral, m, l))


def save_field(fld: DisplacementField, path: PathLike) -> None:
    _write(path, field_to_bytes(fld))


def load_field(path: PathLike) -> DisplacementField:
    return field_from_bytes(_read(path).data, path)


# -- strain images ------------------------------------------------------------

def strain_to_bytes(img: StrainImage) -> bytes:
    m, l = img.shape
    return _header(STRAIN_MAGIC, m, l) + _plane_bytes(img.values)


def strain_from_bytes(data: bytes, path=None) -> StrainImage:
    r = _Reader(data, path)
    m, l = r.header(STRAIN_MAGIC)
    values = r.array(_F32, m * l, "strain")
    r.finish()
    return StrainImage(unflatten(values, m, l))


def save_strain(img: StrainImage, path: PathLike) -> None:
    _write(path, strain_to_bytes(img))


def load_strain(path: PathLike) -> StrainImage:
    return strain_from_bytes(_read(path).data, path)


# -- principal bases ----------------------------------------------------------

_N = struct.Struct("<H")
_EVR = struct.Struct("<d")
_U8 = struct.Struct("<B")

#: Orthonormality tolerance applied when loading; float32 storage rounds components.
LOAD_ORTHONORMAL_TOL = 1e-5


def basis_to_bytes(basis: PrincipalBasis) -> bytes:
    parts = [
        _header(BASIS_MAGIC, basis.m, basis.l),
        _N.pack(basis.N),
        _EVR.pack(basis.explained_variance_ratio),
        basis.singular_values.astype(_F64).tobytes(),
        basis.components.astype(_F32).tobytes(),
    ]
    for label in basis.mode_labels:
        raw = label.encode("utf-8")
        parts.append(_U8.pack(len(raw)) + raw)
    return b"".join(parts)


def basis_from_bytes(data: bytes, path=None) -> PrincipalBasis:
    r = _Reader(data, path)
    m, l = r.header(BASIS_MAGIC)
    (n,) = r.unpack(_N, "component count")
    if n == 0:
        r.fail("basis has zero components", r.pos - _N.size)
    if n * m * l > MAX_ELEMENTS:
        r.fail("component payload too large", r.pos - _N.size)
    (evr,) = r.unpack(_EVR, "explained variance ratio")
    if not np.isfinite(evr) or not 0.0 <= evr <= 1.0:
        r.fail(f"explained variance ratio {evr} outside [0, 1]", r.pos - _EVR.size)
    sv_at = r.pos
    sv = r.array(_F64, n, "singular values")
    if np.any(sv < 0) or np.any(np.diff(sv) > 0):
        r.fail("singular values must be nonnegative and non-increasing", sv_at)
    comp_at = r.pos
    comps = r.array(_F32, n * m * l, "components").reshape(n, m * l)
    labels = []
    for _ in range(n):
        (length,) = r.unpack(_U8, "label length")
        raw = r.take(length, "label")
        try:
            labels.append(raw.decode("utf-8"))
        except UnicodeDecodeError:
            r.fail("label is not valid UTF-8", r.pos - length)
    r.finish()
    try:
        return PrincipalBasis(
            m, l, comps, sv, evr, tuple(labels), orthonormal_tol=LOAD_ORTHONORMAL_TOL
        )
    except ValidationError as exc:
        raise FormatError(str(exc), comp_at, path) from None


def save_basis(basis: PrincipalBasis, path: PathLike) -> None:
    _write(path, basis_to_bytes(basis))


def load_basis(path: PathLike) -> PrincipalBasis:
    return basis_from_bytes(_read(path).data, path)
