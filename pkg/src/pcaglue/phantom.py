"""Synthetic RF frame pairs with exactly known displacement.

Point scatterers are drawn at random, rendered through a separable
Gaussian-modulated-cosine point spread function, then displaced by a
continuous analytic field and rendered again.

Coordinates are in samples (axial, ``z``) and lines (lateral, ``x``). The
``aspect`` of a scene is the number of axial samples spanned by one line
spacing; it converts circular inclusions and rigid rotations between the two
units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.integrate import cumulative_trapezoid

from . import kernels
from .types import DisplacementField, RFFrame, ValidationError

MOTION_KINDS = ("axial-compression", "in-plane-rotation", "lateral-shift")
POISSON_RATIO = 0.3
SPEED_OF_SOUND = 1540.0
SAMPLING_HZ = 40e6
BOUNDARY_WIDTH = 4.0


@dataclass(frozen=True)
class Inclusion:
    """Circular inclusion; ``radius`` is in axial samples."""

    center_row: float
    center_col: float
    radius: float
    stiffness_ratio: float = 3.0


@dataclass(frozen=True)
class SceneSpec:
    m: int
    l: int
    scatterer_density: float = 2.0
    psf_axial_freq: float = 0.25
    psf_axial_sigma: float = 2.0
    psf_lateral_sigma: float = 1.0
    inclusion: Optional[Inclusion] = None
    seed: int = 0
    noise_db: Optional[float] = None
    aspect: float = 6.0

    def validate(self) -> None:
        if self.m < 1 or self.l < 1:
            raise ValidationError("scene dimensions must be positive")
        if not self.scatterer_density > 0:
            raise ValidationError("scatterer_density must be > 0")
        if not (self.psf_axial_sigma > 0 and self.psf_lateral_sigma > 0):
            raise ValidationError("PSF widths must be > 0")
        if self.psf_lateral_sigma > 10:
            raise ValidationError("psf_lateral_sigma above 10 lines is not supported")
        if not self.aspect > 0:
            raise ValidationError("aspect must be > 0")
        inc = self.inclusion
        if inc is not None:
            if not (inc.radius > 0 and inc.stiffness_ratio > 0):
                raise ValidationError("inclusion radius and stiffness ratio must be > 0")
            half_w = inc.radius / self.aspect
            if (inc.center_row - inc.radius < 0 or inc.center_row + inc.radius > self.m - 1
                    or inc.center_col - half_w < 0 or inc.center_col + half_w > self.l - 1):
                raise ValidationError("inclusion does not fit inside the frame")

    @property
    def axial_spacing_mm(self) -> float:
        return SPEED_OF_SOUND / (2 * SAMPLING_HZ) * 1e3

    @property
    def lateral_spacing_mm(self) -> float:
        return self.axial_spacing_mm * self.aspect


@dataclass(frozen=True)
class MotionSpec:
    """``magnitude`` is peak axial samples (compression), axial samples per
    line (rotation) or lines (lateral shift)."""

    kind: str
    magnitude: float

    def validate(self, scene: SceneSpec) -> None:
        if self.kind not in MOTION_KINDS:
            raise ValidationError(f"unknown motion kind {self.kind!r}; expected one of {MOTION_KINDS}")
        if not np.isfinite(self.magnitude):
            raise ValidationError("magnitude must be finite")
        m, l = scene.m, scene.l
        mag = abs(self.magnitude)
        if self.kind == "axial-compression":
            peak_axial, peak_lateral = mag, POISSON_RATIO * 0.5 * mag
        elif self.kind == "in-plane-rotation":
            peak_axial = mag * max(l / 2, l - 1 - l / 2)
            peak_lateral = mag / scene.aspect ** 2 * max(m / 2, m - 1 - m / 2)
        else:
            peak_axial, peak_lateral = 0.0, mag
        if peak_axial > m / 8 or peak_lateral > l / 8:
            raise ValidationError(
                f"{self.kind} of magnitude {self.magnitude} exceeds |axial| <= m/8 or |lateral| <= l/8"
            )


class _InclusionIntegral:
    """Tabulated ``int_0^z w(z', x) dz'`` of the smooth inclusion indicator."""

    def __init__(self, scene: SceneSpec, step_z: float = 0.25, step_x: float = 0.05):
        inc = scene.inclusion
        self.inc = inc
        self.aspect = scene.aspect
        reach = inc.radius + BOUNDARY_WIDTH
        self.z0 = inc.center_row - reach - 1.0
        self.x0 = inc.center_col - reach / scene.aspect - 0.5
        nz = int(math.ceil(2 * (reach + 1.0) / step_z)) + 1
        nx = int(math.ceil(2 * (reach / scene.aspect + 0.5) / step_x)) + 1
        self.step_z, self.step_x = step_z, step_x
        zz = self.z0 + step_z * np.arange(nz)
        xx = self.x0 + step_x * np.arange(nx)
        w = self.indicator(zz[:, None], xx[None, :])
        self.table = cumulative_trapezoid(w, dx=step_z, axis=0, initial=0.0)

    def indicator(self, z, x):
        inc = self.inc
        r = np.hypot(z - inc.center_row, (x - inc.center_col) * self.aspect)
        inner = inc.radius - BOUNDARY_WIDTH / 2
        ramp = 0.5 * (1 + np.cos(np.pi * np.clip(r - inner, 0, BOUNDARY_WIDTH) / BOUNDARY_WIDTH))
        return np.where(r <= inner, 1.0, ramp)

    def __call__(self, z, x):
        z = np.asarray(z, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        coords = np.stack([(z - self.z0) / self.step_z, (x - self.x0) / self.step_x])
        return ndimage.map_coordinates(self.table, coords.reshape(2, -1), order=1, mode="nearest").reshape(z.shape)


def displacement_at(scene: SceneSpec, motion: MotionSpec, z, x) -> Tuple[np.ndarray, np.ndarray]:
    """Continuous ``(axial, lateral)`` displacement at fixed-frame positions."""
    scene.validate()
    motion.validate(scene)
    z = np.asarray(z, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    m, l = scene.m, scene.l
    mag = float(motion.magnitude)
    if motion.kind == "axial-compression":
        depth = z.copy()
        if scene.inclusion is not None and mag != 0.0:
            softening = 1.0 - 1.0 / scene.inclusion.stiffness_ratio
            depth = depth - softening * _InclusionIntegral(scene)(z, x)
        axial = mag * depth / m
        lateral = POISSON_RATIO * (x - l / 2) / l * mag * z / m
    elif motion.kind == "in-plane-rotation":
        axial = mag * (x - l / 2)
        lateral = -(mag / scene.aspect ** 2) * (z - m / 2)
    else:
        axial = np.zeros(np.broadcast(z, x).shape)
        lateral = np.full(np.broadcast(z, x).shape, mag)
    axial, lateral = np.broadcast_arrays(axial, lateral)
    return axial + 0.0, lateral + 0.0


def ground_truth_field(scene: SceneSpec, motion: MotionSpec) -> DisplacementField:
    """The displacement field sampled on the ``m x l`` grid."""
    zz, xx = np.meshgrid(np.arange(scene.m, dtype=np.float64), np.arange(scene.l, dtype=np.float64), indexing="ij")
    axial, lateral = displacement_at(scene, motion, zz, xx)
    return DisplacementField(axial, lateral)


def _scatterers(scene: SceneSpec, rng: np.random.Generator):
    pad_z = math.ceil(3 * scene.psf_axial_sigma + scene.m / 8 + 2)
    pad_x = math.ceil(3 * scene.psf_lateral_sigma + scene.l / 8 + 2)
    depth = scene.m + 2 * pad_z
    width = scene.l + 2 * pad_x
    n = int(round(scene.scatterer_density * depth * width))
    z = rng.uniform(-pad_z, scene.m + pad_z, n)
    x = rng.uniform(-pad_x, scene.l + pad_x, n)
    amp = rng.standard_normal(n)
    return z, x, amp


def render_scatterers(scene: SceneSpec, z, x, amp) -> np.ndarray:
    """RF image of point scatterers at continuous positions."""
    return kernels.render(
        np.ascontiguousarray(z, dtype=np.float64),
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(amp, dtype=np.float64),
        scene.m,
        scene.l,
        float(scene.psf_axial_freq),
        float(scene.psf_axial_sigma),
        float(scene.psf_lateral_sigma),
        3.0 * scene.psf_axial_sigma,
        3.0 * scene.psf_lateral_sigma,
    )


def simulate_pair(scene: SceneSpec, motion: MotionSpec) -> Tuple[RFFrame, RFFrame, DisplacementField]:
    """Render ``(fixed, moving, truth)``; deterministic for a given seed."""
    scene.validate()
    motion.validate(scene)
    scatter_seed, noise_seed = np.random.SeedSequence(scene.seed).spawn(2)
    z, x, amp = _scatterers(scene, np.random.default_rng(scatter_seed))
    dz, dx = displacement_at(scene, motion, z, x)
    fixed = render_scatterers(scene, z, x, amp)
    moving = render_scatterers(scene, z + dz, x + dx, amp)
    if scene.noise_db is not None:
        rng = np.random.default_rng(noise_seed)
        sigma = float(np.sqrt(np.mean(fixed ** 2))) * 10 ** (-scene.noise_db / 20)
        fixed = fixed + sigma * rng.standard_normal(fixed.shape)
        moving = moving + sigma * rng.standard_normal(moving.shape)
    meta = dict(axial_spacing=scene.axial_spacing_mm, lateral_spacing=scene.lateral_spacing_mm)
    return RFFrame(fixed, **meta), RFFrame(moving, **meta), ground_truth_field(scene, motion)


def canonical_fields(m: int, l: int, aspect: float = 6.0) -> dict:
    """Unit-magnitude axial planes of each motion family, keyed by kind."""
    scene = SceneSpec(m, l, aspect=aspect)
    zz, xx = np.meshgrid(np.arange(m, dtype=np.float64), np.arange(l, dtype=np.float64), indexing="ij")
    out = {}
    for kind in MOTION_KINDS:
        # Bypass magnitude validation: only the shape of each family matters here.
        axial, _ = _family_shape(scene, kind, zz, xx)
        out[kind] = axial
    return out


def _family_shape(scene, kind, zz, xx):
    m, l = scene.m, scene.l
    if kind == "axial-compression":
        return zz / m, POISSON_RATIO * (xx - l / 2) / l * zz / m
    if kind == "in-plane-rotation":
        return xx - l / 2, -(zz - m / 2) / scene.aspect ** 2
    return np.zeros_like(zz), np.ones_like(zz)


def random_motion(scene: SceneSpec, rng: np.random.Generator, kind: Optional[str] = None,
                  max_compression: float = 8.0) -> MotionSpec:
    """A motion of the given (or a random) kind with a randomised magnitude.

    Ranges: compression up to ``max_compression`` samples (capped at ``m/8``),
    rotation with edge displacement up to 4 samples, lateral shift up to
    2 lines; each also capped by the scene's validity bounds.
    """
    kind = kind or MOTION_KINDS[rng.integers(len(MOTION_KINDS))]
    sign = rng.choice([-1.0, 1.0])
    u = rng.uniform(0.1, 1.0)
    m, l = scene.m, scene.l
    if kind == "axial-compression":
        mag = u * min(max_compression, m / 8)
    elif kind == "in-plane-rotation":
        edge = min(4.0, m / 8)
        mag = u * min(edge / (l / 2), (l / 8) * scene.aspect ** 2 / (m / 2))
    else:
        mag = u * min(2.0, l / 8)
    return MotionSpec(kind, sign * mag)


def random_inclusion(m: int, l: int, rng: np.random.Generator, aspect: float = 6.0) -> Optional[Inclusion]:
    """A random inclusion that fits in the frame, or ``None`` if none can."""
    max_r = min(0.15 * m, 0.3 * (l - 1) * aspect, 0.45 * (m - 1))
    if max_r < 2 * BOUNDARY_WIDTH:
        return None
    radius = rng.uniform(max(0.4 * max_r, 2 * BOUNDARY_WIDTH), max_r)
    half_w = radius / aspect
    row = rng.uniform(radius, m - 1 - radius)
    col = rng.uniform(half_w, l - 1 - half_w)
    return Inclusion(row, col, radius, rng.uniform(1.5, 4.0))


def training_scenes(m: int, l: int, count: int, seed: int = 0, aspect: float = 6.0,
                    inclusion_prob: float = 0.5) -> List[Tuple[SceneSpec, MotionSpec]]:
    """Scene/motion pairs spread over the three motion kinds.

    Kinds cycle so each is equally represented; compressions carry a random
    inclusion with probability ``inclusion_prob``. Scene ``k`` gets speckle
    seed ``seed * count + k`` so pairs can be rendered independently.
    """
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        kind = MOTION_KINDS[k % len(MOTION_KINDS)]
        inc = None
        if kind == "axial-compression" and rng.uniform() < inclusion_prob:
            inc = random_inclusion(m, l, rng, aspect)
        scene = SceneSpec(m, l, inclusion=inc, aspect=aspect, seed=seed * count + k)
        out.append((scene, random_motion(scene, rng, kind)))
    return out


def training_fields(m: int, l: int, count: int, seed: int = 0, aspect: float = 6.0,
                    inclusion_prob: float = 0.5) -> List[DisplacementField]:
    """Ground-truth fields of :func:`training_scenes`."""
    return [ground_truth_field(sc, mo) for sc, mo in training_scenes(m, l, count, seed, aspect, inclusion_prob)]
