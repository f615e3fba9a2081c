"""Value types shared across the package.

All 2D planes are held as ``(m, l)`` float64 arrays: ``m`` axial samples per
RF line, ``l`` RF lines. Whenever a plane is flattened to a vector the sample
index varies fastest (``order="F"``), so that position ``(i, j)`` maps to
``j * m + i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

MIN_SAMPLES = 16
MIN_LINES = 4


class ValidationError(ValueError):
    """Raised when a value violates a documented precondition or invariant."""


def _plane(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, order="F", copy=True)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


def flatten(plane: np.ndarray) -> np.ndarray:
    """Flatten an ``(m, l)`` plane with the axial index varying fastest."""
    return np.ravel(plane, order="F")


def unflatten(vec: np.ndarray, m: int, l: int) -> np.ndarray:
    """Inverse of :func:`flatten`."""
    return np.reshape(vec, (m, l), order="F")


@dataclass(frozen=True, eq=False)
class RFFrame:
    """An ``m x l`` grid of RF samples.

    Spacings are optional metadata in mm and are never used by the core math.
    """

    samples: np.ndarray
    axial_spacing: Optional[float] = None
    lateral_spacing: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "samples", _plane(self.samples, "samples"))

    @property
    def m(self) -> int:
        return self.samples.shape[0]

    @property
    def l(self) -> int:
        return self.samples.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.samples.shape

    def __eq__(self, other):
        if not isinstance(other, RFFrame):
            return NotImplemented
        return (
            np.array_equal(self.samples, other.samples)
            and self.axial_spacing == other.axial_spacing
            and self.lateral_spacing == other.lateral_spacing
        )

    def require_estimable(self) -> None:
        if self.m < MIN_SAMPLES or self.l < MIN_LINES:
            raise ValidationError(
                f"frame {self.m}x{self.l} is too small for estimation "
                f"(need m >= {MIN_SAMPLES}, l >= {MIN_LINES})"
            )


@dataclass(frozen=True, eq=False)
class DisplacementField:
    """Dense displacement: axial in samples, lateral in RF lines."""

    axial: np.ndarray
    lateral: np.ndarray

    def __post_init__(self):
        a = _plane(self.axial, "axial")
        t = _plane(self.lateral, "lateral")
        if a.shape != t.shape:
            raise ValidationError(f"axial {a.shape} and lateral {t.shape} planes differ in shape")
        object.__setattr__(self, "axial", a)
        object.__setattr__(self, "lateral", t)

    @classmethod
    def zeros(cls, m: int, l: int) -> "DisplacementField":
        return cls(np.zeros((m, l)), np.zeros((m, l)))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.axial.shape

    def __eq__(self, other):
        if not isinstance(other, DisplacementField):
            return NotImplemented
        return np.array_equal(self.axial, other.axial) and np.array_equal(self.lateral, other.lateral)


@dataclass(frozen=True, eq=False)
class SparseCorrespondences:
    """Displacements at every sample of ``p`` chosen lines.

    Entries are packed line by line (ascending), samples fastest, so entry
    ``k`` sits at ``coords[k] == (k % m, lines_used[k // m])``.
    """

    coords: np.ndarray
    axial_disp: np.ndarray
    lateral_disp: np.ndarray
    lines_used: np.ndarray
    m: int
    l: int

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.int64)
        lines = np.asarray(self.lines_used, dtype=np.int64)
        c = np.asarray(self.axial_disp, dtype=np.float64)
        lat = np.asarray(self.lateral_disp, dtype=np.float64)
        k = self.m * len(lines)
        if coords.shape != (k, 2) or c.shape != (k,) or lat.shape != (k,):
            raise ValidationError(f"expected K = m*p = {k} correspondences")
        if len(lines) and (np.any(np.diff(lines) <= 0) or lines[0] < 0 or lines[-1] >= self.l):
            raise ValidationError("lines_used must be strictly increasing and inside the frame")
        if np.any(coords[:, 0] < 0) or np.any(coords[:, 0] >= self.m):
            raise ValidationError("axial coordinate outside the frame")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(lat))):
            raise ValidationError("non-finite displacement")
        for name, v in (("coords", coords), ("lines_used", lines), ("axial_disp", c), ("lateral_disp", lat)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def p(self) -> int:
        return len(self.lines_used)

    @property
    def K(self) -> int:
        return len(self.axial_disp)

    @property
    def c(self) -> np.ndarray:
        return self.axial_disp


@dataclass(frozen=True, eq=False)
class PrincipalBasis:
    """Orthonormal axial-displacement components, one flattened field per row."""

    m: int
    l: int
    components: np.ndarray
    singular_values: np.ndarray
    explained_variance_ratio: float
    mode_labels: Tuple[str, ...] = ()
    orthonormal_tol: float = field(default=1e-6, repr=False)

    def __post_init__(self):
        comps = np.array(self.components, dtype=np.float64, copy=True)
        sv = np.array(self.singular_values, dtype=np.float64, copy=True)
        if comps.ndim != 2 or comps.shape[1] != self.m * self.l:
            raise ValidationError(f"components must have shape (N, {self.m * self.l})")
        n = comps.shape[0]
        if n < 1 or n > 0xFFFF:
            raise ValidationError(f"component count {n} out of range")
        if sv.shape != (n,):
            raise ValidationError("need one singular value per component")
        if not (np.all(np.isfinite(comps)) and np.all(np.isfinite(sv))):
            raise ValidationError("non-finite basis payload")
        if np.any(sv < 0) or np.any(np.diff(sv) > 0):
            raise ValidationError("singular values must be nonnegative and non-increasing")
        if not 0.0 <= self.explained_variance_ratio <= 1.0:
            raise ValidationError("explained_variance_ratio must lie in [0, 1]")
        gram = comps @ comps.T
        err = np.max(np.abs(gram - np.eye(n)))
        if err > self.orthonormal_tol:
            raise ValidationError(f"components are not orthonormal (max |<b_i,b_j> - delta_ij| = {err:.3g})")
        labels = tuple(self.mode_labels) if self.mode_labels else ("",) * n
        if len(labels) != n:
            raise ValidationError("need one mode label per component")
        for lab in labels:
            if len(lab.encode("utf-8")) > 255:
                raise ValidationError(f"mode label too long: {lab!r}")
        comps.setflags(write=False)
        sv.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "singular_values", sv)
        object.__setattr__(self, "mode_labels", labels)
        object.__setattr__(self, "explained_variance_ratio", float(self.explained_variance_ratio))

    @property
    def N(self) -> int:
        return self.components.shape[0]

    def label(self, n: int) -> str:
        """Label of component ``n`` (0-based), falling back to its 1-based index."""
        return self.mode_labels[n] or f"component-{n + 1}"

    def component_plane(self, n: int) -> np.ndarray:
        return unflatten(self.components[n], self.m, self.l)

    def __eq__(self, other):
        if not isinstance(other, PrincipalBasis):
            return NotImplemented
        return (
            self.m == other.m
            and self.l == other.l
            and np.array_equal(self.components, other.components)
            and np.array_equal(self.singular_values, other.singular_values)
            and self.explained_variance_ratio == other.explained_variance_ratio
            and self.mode_labels == other.mode_labels
        )


@dataclass(frozen=True, eq=False)
class WeightVector:
    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64, copy=True).reshape(-1)
        if not np.all(np.isfinite(w)):
            raise ValidationError("non-finite weight")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    def __len__(self):
        return len(self.w)


@dataclass(frozen=True, eq=False)
class StrainImage:
    values: np.ndarray
    window_len: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", _plane(self.values, "strain"))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, StrainImage):
            return NotImplemented
        return np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class Window:
    """Rectangle in sample/line units: rows ``row:row+height``, cols ``col:col+width``."""

    row: int
    col: int
    height: int
    width: int

    @classmethod
    def parse(cls, text: str) -> "Window":
        try:
            parts = [int(p) for p in text.split(",")]
        except ValueError:
            parts = []
        if len(parts) != 4:
            raise ValidationError(f"window must be row,col,height,width; got {text!r}")
        return cls(*parts)

    @property
    def size(self) -> int:
        return self.height * self.width

    def inside(self, shape: Sequence[int]) -> bool:
        m, l = shape
        return (
            self.height > 0 and self.width > 0 and self.row >= 0 and self.col >= 0
            and self.row + self.height <= m and self.col + self.width <= l
        )

    def overlaps(self, other: "Window") -> bool:
        return not (
            self.row + self.height <= other.row or other.row + other.height <= self.row
            or self.col + self.width <= other.col or other.col + other.width <= self.col
        )

    def slices(self):
        return slice(self.row, self.row + self.height), slice(self.col, self.col + self.width)


@dataclass(frozen=True)
class MetricsReport:
    snr: float
    cnr: float
    target_window: Window
    background_window: Window
    target_mean: float
    target_std: float
    background_mean: float
    background_std: float

    def as_records(self) -> dict:
        return {
            "snr": self.snr,
            "cnr": self.cnr,
            "target_mean": self.target_mean,
            "target_std": self.target_std,
            "background_mean": self.background_mean,
            "background_std": self.background_std,
        }
