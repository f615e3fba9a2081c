"""PCA deformation basis: training, weight fitting and dense reconstruction.

The basis is trained without mean subtraction, so a dense axial field is
approximated directly as ``sum_n w_n * b_n``. Weights are fitted to the sparse
DP correspondences by (lightly ridge-regularised) least squares.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .dp import DpParams, sparse_correspondences
from .phantom import canonical_fields
from .types import (
    DisplacementField,
    PrincipalBasis,
    RFFrame,
    SparseCorrespondences,
    ValidationError,
    WeightVector,
    flatten,
    unflatten,
)

#: Above this many matrix entries the SVD goes through the n x n Gram matrix.
DIRECT_SVD_LIMIT = 40_000_000
LABEL_MIN_COSINE = 0.5


class SparseLinesWarning(UserWarning):
    """Lateral interpolation fell back to constant extrapolation from one line."""


def _data_matrix(fields: Sequence[DisplacementField]) -> np.ndarray:
    if len(fields) < 2:
        raise ValidationError("need at least 2 training fields")
    shape = fields[0].shape
    for f in fields:
        if f.shape != shape:
            raise ValidationError(f"training field shape {f.shape} differs from {shape}")
    return np.stack([flatten(f.axial) for f in fields])


def _spectrum(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Singular values (descending) and right singular vectors as rows."""
    n, d = X.shape
    if n * d <= DIRECT_SVD_LIMIT or n > d:
        _, s, vt = np.linalg.svd(X, full_matrices=False)
        return s, vt
    gram = X @ X.T
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    s = np.sqrt(evals)
    keep = s > s[0] * 1e-7 if s[0] > 0 else np.zeros(len(s), bool)
    vt = np.zeros((n, d))
    vt[keep] = (evecs[:, keep].T @ X) / s[keep, None]
    return s, vt


def _fix_signs(comps: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(len(comps)), idx])
    signs[signs == 0] = 1.0
    return comps * signs[:, None]


def label_components(components: np.ndarray, m: int, l: int, aspect: float = 6.0) -> Tuple[str, ...]:
    """Tag each component with the motion family it most resembles.

    Families whose axial plane is identically zero (lateral shift) never match.
    Components with no family above a cosine of 0.5 stay unlabeled.
    """
    fams = []
    for kind, plane in canonical_fields(m, l, aspect).items():
        v = flatten(plane)
        norm = np.linalg.norm(v)
        if norm > 0:
            fams.append((kind, v / norm))
    labels = []
    for comp in components:
        cos = [abs(float(comp @ v)) for _, v in fams]
        best = int(np.argmax(cos)) if cos else -1
        labels.append(fams[best][0] if best >= 0 and cos[best] >= LABEL_MIN_COSINE else "")
    return tuple(labels)


def train_basis(fields: Sequence[DisplacementField], variance_threshold: float = 0.95,
                max_components: int = 12, label_modes: bool = True, aspect: float = 6.0) -> PrincipalBasis:
    """Uncentred PCA of the axial planes of ``fields``.

    Keeps the fewest components whose squared singular values reach
    ``variance_threshold`` of the total, capped at ``max_components``.
    """
    if not 0.0 < variance_threshold <= 1.0:
        raise ValidationError("variance_threshold must lie in (0, 1]")
    if max_components < 1:
        raise ValidationError("max_components must be >= 1")
    X = _data_matrix(fields)
    m, l = fields[0].shape
    s, vt = _spectrum(X)
    energy = s ** 2
    total = float(energy.sum())
    if total <= 0.0:
        raise ValidationError("training fields have zero axial displacement")
    ratios = np.cumsum(energy) / total
    # Tiny slack so exact-rank data reaches a threshold of 1.0.
    n_needed = int(np.searchsorted(ratios, variance_threshold - 1e-12) + 1)
    n_nonzero = int(np.count_nonzero(s > s[0] * 1e-7))
    n = max(1, min(n_needed, max_components, n_nonzero))
    if ratios[n - 1] < variance_threshold - 1e-12:
        warnings.warn(
            f"{n} components explain only {ratios[n - 1]:.4f} of the variance "
            f"(threshold {variance_threshold})",
            RuntimeWarning,
        )
    comps = vt[:n]
    q, _ = np.linalg.qr(comps.T)
    q = q.T * np.sign(np.sum(q.T * comps, axis=1))[:, None]
    comps = _fix_signs(q)
    labels = label_components(comps, m, l, aspect) if label_modes else ()
    return PrincipalBasis(m, l, comps, s[:n], min(1.0, float(ratios[n - 1])), labels)


def build_design_matrix(basis: PrincipalBasis, coords) -> np.ndarray:
    """``A[k, n] = b_n(q_k)`` for coordinates ``q_k = (row, line)``."""
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
    i, j = coords[:, 0], coords[:, 1]
    if np.any((i < 0) | (i >= basis.m) | (j < 0) | (j >= basis.l)):
        raise ValidationError("coordinate outside the basis dimensions")
    return basis.components[:, j * basis.m + i].T


def default_ridge(A: np.ndarray) -> float:
    """``1e-8 * trace(A^T A) / N``."""
    return 1e-8 * float(np.sum(A * A)) / A.shape[1]


def solve_weights(A: np.ndarray, c: np.ndarray, ridge: Optional[float] = None) -> Tuple[WeightVector, float]:
    """Minimise ``|A w - c|^2 + ridge * |w|^2``; returns ``(w, |A w - c|)``.

    Solved as an augmented least-squares problem through an SVD, which also
    gives the minimum-norm answer when ``ridge == 0`` and ``A`` is rank
    deficient.
    """
    A = np.asarray(A, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    if A.ndim != 2 or A.shape[0] != len(c):
        raise ValidationError(f"A {A.shape} and c ({len(c)},) are incompatible")
    K, N = A.shape
    if K < N:
        raise ValidationError(f"need at least as many correspondences as components (K={K} < N={N})")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(c))):
        raise ValidationError("A or c contains non-finite entries")
    eps = default_ridge(A) if ridge is None else float(ridge)
    if eps < 0:
        raise ValidationError("ridge must be >= 0")
    if eps > 0:
        lhs = np.vstack([A, np.sqrt(eps) * np.eye(N)])
        rhs = np.concatenate([c, np.zeros(N)])
    else:
        lhs, rhs = A, c
    w, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    residual = float(np.linalg.norm(A @ w - c))
    return WeightVector(w), residual


def reconstruct_axial(basis: PrincipalBasis, w) -> np.ndarray:
    """Dense axial plane ``sum_n w_n b_n`` of shape ``(m, l)``."""
    w = w.w if isinstance(w, WeightVector) else np.asarray(w, dtype=np.float64)
    if len(w) != basis.N:
        raise ValidationError(f"{len(w)} weights for {basis.N} components")
    return unflatten(w @ basis.components, basis.m, basis.l)


def lateral_bilinear(sparse: SparseCorrespondences, m: int, l: int) -> np.ndarray:
    """Dense lateral plane interpolated linearly between the sparse lines.

    Rows are already dense, so only the line axis is interpolated; columns
    outside the outermost sparse lines copy the nearest one.
    """
    if (sparse.m, sparse.l) != (m, l):
        raise ValidationError(f"correspondences are for {sparse.m}x{sparse.l}, not {m}x{l}")
    lines = sparse.lines_used.astype(np.float64)
    vals = sparse.lateral_disp.reshape((m, sparse.p), order="F")
    if sparse.p < 2:
        warnings.warn("fewer than 2 sparse lines; lateral field is constant per row", SparseLinesWarning)
        return np.repeat(vals[:, :1], l, axis=1)
    cols = np.arange(l, dtype=np.float64)
    hi = np.clip(np.searchsorted(lines, cols, side="right"), 1, sparse.p - 1)
    lo = hi - 1
    frac = np.clip((cols - lines[lo]) / (lines[hi] - lines[lo]), 0.0, 1.0)
    return vals[:, lo] * (1.0 - frac) + vals[:, hi] * frac


@dataclass(frozen=True)
class InitResult:
    """Initial dense field plus the fit diagnostics."""

    field: DisplacementField
    weights: WeightVector
    residual: float
    sparse: SparseCorrespondences


def fit_sparse(basis: PrincipalBasis, sparse: SparseCorrespondences,
               ridge: Optional[float] = None) -> InitResult:
    """Weights and dense field from already computed correspondences."""
    if (sparse.m, sparse.l) != (basis.m, basis.l):
        raise ValidationError(
            f"basis is {basis.m}x{basis.l} but the frames are {sparse.m}x{sparse.l}"
        )
    A = build_design_matrix(basis, sparse.coords)
    w, residual = solve_weights(A, sparse.axial_disp, ridge)
    axial = reconstruct_axial(basis, w)
    lateral = lateral_bilinear(sparse, basis.m, basis.l)
    return InitResult(DisplacementField(axial, lateral), w, residual, sparse)


def pca_glue_init(fixed: RFFrame, moving: RFFrame, basis: PrincipalBasis, p: int = 5,
                  dp_params: DpParams = DpParams(), ridge: Optional[float] = None,
                  threads: Optional[int] = 1) -> InitResult:
    """DP on ``p`` lines, weight fit, axial reconstruction and lateral interpolation."""
    if fixed.shape != (basis.m, basis.l):
        raise ValidationError(f"basis is {basis.m}x{basis.l} but the frames are {fixed.m}x{fixed.l}")
    sparse = sparse_correspondences(fixed, moving, p, dp_params, threads=threads)
    return fit_sparse(basis, sparse, ridge)


@dataclass(frozen=True)
class MotionReport:
    fractions: np.ndarray
    labels: Tuple[str, ...]
    dominant: Optional[int]

    @property
    def dominant_label(self) -> Optional[str]:
        return None if self.dominant is None else self.labels[self.dominant]


def motion_report(w, basis: PrincipalBasis) -> MotionReport:
    """Share of ``|w|^2`` carried by each component and the dominant mode."""
    w = w.w if isinstance(w, WeightVector) else np.asarray(w, dtype=np.float64)
    labels = tuple(basis.label(n) for n in range(basis.N))
    total = float(w @ w)
    if total == 0.0:
        return MotionReport(np.zeros(len(w)), labels, None)
    frac = w * w / total
    return MotionReport(frac, labels, int(np.argmax(frac)))
