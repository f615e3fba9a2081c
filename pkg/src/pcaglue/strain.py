"""Axial strain by least-squares differentiation, and SNR/CNR over windows."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .types import DisplacementField, MetricsReport, StrainImage, ValidationError, Window


class DegenerateWindowError(ValidationError):
    """A window has zero spread, so SNR or CNR would divide by zero."""


def strain(field: DisplacementField, window_len: int = 43) -> StrainImage:
    """Slope of a least-squares line through the axial displacement.

    The fit uses ``window_len`` samples centred on each sample; near the top
    and bottom the window is truncated at the frame edge, so those fits are
    asymmetric but still exact for linear data.
    """
    m, _ = field.shape
    if window_len < 3 or window_len % 2 == 0:
        raise ValidationError("window_len must be an odd integer >= 3")
    if window_len > m / 4:
        raise ValidationError(f"window_len {window_len} exceeds m/4 = {m / 4}")
    d = field.axial
    h = window_len // 2
    x = np.arange(-h, h + 1, dtype=np.float64)
    out = ndimage.correlate1d(d, x / (x @ x), axis=0, mode="nearest")
    for i in list(range(h)) + list(range(m - h, m)):
        lo, hi = max(0, i - h), min(m, i + h + 1)
        xs = np.arange(lo, hi, dtype=np.float64)
        xs -= xs.mean()
        out[i] = (xs @ d[lo:hi]) / (xs @ xs)
    return StrainImage(out, window_len)


def window_from_mm(row_mm: float, col_mm: float, height_mm: float, width_mm: float,
                   axial_spacing: float, lateral_spacing: float) -> Window:
    """Convert a rectangle given in mm to sample/line units (rounded)."""
    if not (axial_spacing and lateral_spacing and axial_spacing > 0 and lateral_spacing > 0):
        raise ValidationError("mm windows need positive axial and lateral spacings")
    return Window(
        int(round(row_mm / axial_spacing)),
        int(round(col_mm / lateral_spacing)),
        max(1, int(round(height_mm / axial_spacing))),
        max(1, int(round(width_mm / lateral_spacing))),
    )


def snr_cnr(img: StrainImage, target: Window, background: Window) -> MetricsReport:
    """SNR of the background window and CNR between target and background.

    ``CNR = sqrt(2 (mean_b - mean_t)^2 / (var_b + var_t))`` and
    ``SNR = mean_b / std_b``, with population (divide-by-n) statistics.
    """
    for name, w in (("target", target), ("background", background)):
        if not w.inside(img.shape):
            raise ValidationError(f"{name} window {w} is not inside the {img.shape} image")
        if w.size < 4:
            raise ValidationError(f"{name} window must cover at least 4 samples")
    if target.overlaps(background):
        raise ValidationError("target and background windows overlap")
    t = img.values[target.slices()]
    b = img.values[background.slices()]
    mt, mb = float(t.mean()), float(b.mean())
    vt, vb = float(t.var()), float(b.var())
    if vb == 0.0:
        raise DegenerateWindowError("background window has zero variance")
    cnr = float(np.sqrt(2.0 * (mb - mt) ** 2 / (vb + vt)))
    snr = mb / float(np.sqrt(vb))
    return MetricsReport(snr, cnr, target, background, mt, float(np.sqrt(vt)), mb, float(np.sqrt(vb)))
