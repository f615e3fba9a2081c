"""Global regularised refinement of a dense displacement field.

Around the current field ``(a, t)`` the moving frame is linearised to first
order and the per-sample updates ``(da, dt)`` minimise

    sum (r - gi*da - gj*dt)^2
      + alpha  * sum (axial differences of a + da)^2
      + beta   * sum (lateral differences of t + dt)^2
      + alpha2 * sum (lateral differences of a + da)^2
      + beta2  * sum (axial differences of t + dt)^2
      + mu * |(da, dt)|^2

with ``r = fixed - warped moving`` and ``(gi, gj)`` the warped moving-frame
gradients. The normal equations form one sparse symmetric positive-definite
system per pass. ``mu`` is a tiny damping term that keeps the system
definite in textureless regions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .dp import normalized_pair
from .types import DisplacementField, RFFrame, ValidationError


class RefineError(RuntimeError):
    """The linear solve failed; ``residual`` is the relative residual reached."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3g})")
        self.residual = residual


class ClampWarning(UserWarning):
    """Some refined displacements pointed outside the frame and were clamped."""


@dataclass(frozen=True)
class RefineParams:
    axial_reg: float = 5.0
    lateral_reg: float = 1.0
    axial_cross_reg: float = 1.0
    lateral_cross_reg: float = 5.0
    iterations: int = 1
    damping: float = 1e-6
    interp_order: int = 5
    gradient_step: float = 0.5
    direct_limit: int = 400_000
    cg_rtol: float = 1e-8

    def validate(self) -> None:
        for name in ("axial_reg", "lateral_reg"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be finite and > 0")
        for name in ("axial_cross_reg", "lateral_cross_reg"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValidationError(f"{name} must be finite and >= 0")
        if not 1 <= self.iterations <= 3:
            raise ValidationError("iterations must be between 1 and 3")
        if not (np.isfinite(self.damping) and self.damping > 0):
            raise ValidationError("damping must be finite and > 0")
        if self.interp_order not in (1, 3, 5):
            raise ValidationError("interp_order must be 1, 3 or 5")


def _difference(n: int) -> sp.csr_matrix:
    """``(n-1) x n`` forward-difference operator."""
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


class LinearizedProblem:
    """Normal equations of one refinement pass.

    Unknowns are stacked as ``[da; dt]``, each flattened with the axial index
    fastest.
    """

    def __init__(self, fixed: np.ndarray, moving: np.ndarray, a0: np.ndarray, t0: np.ndarray,
                 params: RefineParams):
        m, l = fixed.shape
        self.shape = (m, l)
        self.params = params
        coeffs = moving if params.interp_order == 1 else ndimage.spline_filter(moving, params.interp_order)
        ii, jj = np.meshgrid(np.arange(m, dtype=np.float64), np.arange(l, dtype=np.float64), indexing="ij")
        pi, pj = ii + a0, jj + t0
        h = params.gradient_step

        def sample(di, dj):
            return ndimage.map_coordinates(
                coeffs, [pi + di, pj + dj], order=params.interp_order, mode="mirror", prefilter=False
            )

        warped = sample(0.0, 0.0)
        # Spline evaluation at grid points is exact only up to round-off; use
        # the stored samples there so identical frames give a zero residual.
        on_grid = (pi == np.round(pi)) & (pj == np.round(pj)) & (pi >= 0) & (pi <= m - 1) & (pj >= 0) & (pj <= l - 1)
        warped[on_grid] = moving[pi[on_grid].astype(np.int64), pj[on_grid].astype(np.int64)]
        self.gi = ((sample(h, 0.0) - sample(-h, 0.0)) / (2 * h)).ravel(order="F")
        self.gj = ((sample(0.0, h) - sample(0.0, -h)) / (2 * h)).ravel(order="F")
        self.r = (fixed - warped).ravel(order="F")
        self.a0 = a0.ravel(order="F")
        self.t0 = t0.ravel(order="F")

        n = m * l
        # Axial and lateral difference operators on axial-fastest vectors.
        self.Dz = sp.kron(sp.identity(l), _difference(m), format="csr")
        self.Dx = sp.kron(_difference(l), sp.identity(m), format="csr")
        Lz = self.Dz.T @ self.Dz
        Lx = self.Dx.T @ self.Dx
        self.Ra = params.axial_reg * Lz + params.axial_cross_reg * Lx
        self.Rt = params.lateral_reg * Lx + params.lateral_cross_reg * Lz
        mu = params.damping
        gi, gj = self.gi, self.gj
        haa = sp.diags(gi * gi + mu) + self.Ra
        htt = sp.diags(gj * gj + mu) + self.Rt
        hat = sp.diags(gi * gj)
        self.matrix = sp.bmat([[haa, hat], [hat, htt]], format="csc")
        self.rhs = np.concatenate([gi * self.r - self.Ra @ self.a0, gj * self.r - self.Rt @ self.t0])
        self.n = n

    def energy(self, x: np.ndarray) -> float:
        """Linearised objective at update ``x = [da; dt]``."""
        da, dt = x[:self.n], x[self.n:]
        data = self.r - self.gi * da - self.gj * dt
        a = self.a0 + da
        t = self.t0 + dt
        return float(data @ data + a @ (self.Ra @ a) + t @ (self.Rt @ t) + self.params.damping * (x @ x))

    def solve(self) -> np.ndarray:
        A, b = self.matrix, self.rhs
        bnorm = float(np.linalg.norm(b))
        if bnorm == 0.0:
            return np.zeros_like(b)
        if A.shape[0] <= self.params.direct_limit:
            try:
                lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A")
            except RuntimeError as exc:
                raise RefineError(f"sparse factorisation failed: {exc}", np.inf) from None
            x = lu.solve(b)
        else:
            diag = A.diagonal()
            precond = spla.LinearOperator(A.shape, matvec=lambda v: v / diag)
            x, info = spla.cg(A, b, rtol=self.params.cg_rtol, maxiter=int(20 * A.shape[0] ** 0.5) + 1000, M=precond)
            if info != 0:
                res = float(np.linalg.norm(A @ x - b)) / bnorm
                raise RefineError("conjugate gradient did not converge", res)
            if not np.all(np.isfinite(x)):
                raise RefineError("conjugate gradient produced non-finite values", np.inf)
            return x
        # Normwise backward error of the direct solve; unlike the relative
        # residual it stays meaningful when huge regularisers dominate the matrix.
        r = A @ x - b
        anorm = float(abs(A).sum(axis=1).max())
        eta = float(np.abs(r).max()) / (anorm * float(np.abs(x).max()) + float(np.abs(b).max()))
        if not np.all(np.isfinite(x)) or eta > 1e-10:
            raise RefineError("direct solve inaccurate", float(np.linalg.norm(r)) / bnorm)
        return x


def linearize(fixed: RFFrame, moving: RFFrame, field: DisplacementField,
              params: RefineParams = RefineParams()) -> LinearizedProblem:
    """The normal equations of a single pass around ``field``."""
    _check(fixed, moving, field, params)
    f, g = normalized_pair(fixed, moving)
    return LinearizedProblem(f, g, field.axial, field.lateral, params)


def _check(fixed, moving, init, params):
    params.validate()
    if fixed.shape != moving.shape:
        raise ValidationError(f"frame shapes differ: {fixed.shape} vs {moving.shape}")
    fixed.require_estimable()
    if init.shape != fixed.shape:
        raise ValidationError(f"initial field {init.shape} does not match frames {fixed.shape}")
    if np.max(np.abs(init.axial)) > fixed.m / 4:
        raise ValidationError("initial axial displacement exceeds m/4")


def refine(fixed: RFFrame, moving: RFFrame, init: DisplacementField,
           params: RefineParams = RefineParams()) -> DisplacementField:
    """Fine-tune ``init`` by ``params.iterations`` linearised global solves.

    Axial displacements beyond ``m/4`` and lateral ones beyond ``l/4`` are
    clamped and a :class:`ClampWarning` is issued.
    """
    _check(fixed, moving, init, params)
    m, l = fixed.shape
    f, g = normalized_pair(fixed, moving)
    a = np.array(init.axial, dtype=np.float64)
    t = np.array(init.lateral, dtype=np.float64)
    for _ in range(params.iterations):
        prob = LinearizedProblem(f, g, a, t, params)
        x = prob.solve()
        a = a + x[:prob.n].reshape((m, l), order="F")
        t = t + x[prob.n:].reshape((m, l), order="F")
    a_c = np.clip(a, -m / 4, m / 4)
    t_c = np.clip(t, -l / 4, l / 4)
    if np.any(a_c != a) or np.any(t_c != t):
        warnings.warn("refined displacement exceeded m/4 or l/4 and was clamped", ClampWarning)
    return DisplacementField(a_c, t_c)
