"""Regularised dynamic-programming time-delay estimation along RF lines.

For line ``j`` every axial sample ``i`` is assigned an integer displacement
pair ``(a_i, t_i)`` (samples, lines) minimising

    sum_i D(i, a_i, t_i) + lam * ((a_i - a_{i-1})**2 + (t_i - t_{i-1})**2)

where ``D`` is the windowed mean squared difference between the fixed line
around ``i`` and moving line ``j + t_i`` around ``i + a_i``. Both frames are
scaled to unit RMS first.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import kernels
from .types import DisplacementField, RFFrame, SparseCorrespondences, ValidationError

BRUTE_FORCE_LIMIT = 10 ** 8


@dataclass(frozen=True)
class DpParams:
    max_axial_disp: int = 10
    max_lateral_disp: int = 1
    smoothness_weight: float = 1.0
    data_window: int = 9

    def validate(self, m: int, l: int) -> None:
        if self.max_axial_disp < 1:
            raise ValidationError("max_axial_disp must be >= 1")
        if self.max_lateral_disp < 0:
            raise ValidationError("max_lateral_disp must be >= 0")
        if not (self.smoothness_weight >= 0 and np.isfinite(self.smoothness_weight)):
            raise ValidationError("smoothness_weight must be finite and >= 0")
        if self.data_window < 1 or self.data_window % 2 == 0:
            raise ValidationError("data_window must be an odd integer >= 1")
        if not self.max_axial_disp + self.data_window // 2 < m / 2:
            raise ValidationError(
                f"max_axial_disp + data_window//2 must be < m/2 (= {m / 2}) for m = {m}"
            )
        if not self.max_lateral_disp < l / 2:
            raise ValidationError(f"max_lateral_disp must be < l/2 (= {l / 2})")

    def states(self) -> np.ndarray:
        """All ``(a, t)`` pairs in tie-breaking priority order.

        Smaller ``|a|`` first, then smaller ``a``, then the same for ``t``.
        """
        A, T = self.max_axial_disp, self.max_lateral_disp
        pairs = itertools.product(range(-A, A + 1), range(-T, T + 1))
        return np.array(sorted(pairs, key=lambda p: (abs(p[0]), p[0], abs(p[1]), p[1])), dtype=np.int64)

    def transition_costs(self, states: np.ndarray) -> np.ndarray:
        da = states[:, 0][:, None] - states[:, 0][None, :]
        dt = states[:, 1][:, None] - states[:, 1][None, :]
        return self.smoothness_weight * (da * da + dt * dt).astype(np.float64)


@dataclass(frozen=True)
class DpLineResult:
    """Integer displacements of one line and the optimal total cost."""

    axial: np.ndarray
    lateral: np.ndarray
    cost: float


class _LineProblem:
    """Cost tables for one line, shared by the DP, the oracle and refinement."""

    def __init__(self, f: np.ndarray, g: np.ndarray, line_j: int, params: DpParams):
        self.params = params
        self.states = params.states()
        self.trans = params.transition_costs(self.states)
        self.table = kernels.data_table(
            np.ascontiguousarray(f[:, line_j]),
            g,
            int(line_j),
            np.ascontiguousarray(self.states[:, 0]),
            np.ascontiguousarray(self.states[:, 1]),
            params.data_window // 2,
        )
        A, T = params.max_axial_disp, params.max_lateral_disp
        self.index = np.empty((2 * A + 1, 2 * T + 1), dtype=np.int64)
        self.index[self.states[:, 0] + A, self.states[:, 1] + T] = np.arange(len(self.states))

    def solve(self) -> DpLineResult:
        path, cost = kernels.dp_solve(self.table, self.trans)
        st = self.states[path]
        return DpLineResult(st[:, 0].copy(), st[:, 1].copy(), cost)

    def refine(self, axial_int: np.ndarray, lateral_int: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        A, T = self.params.max_axial_disp, self.params.max_lateral_disp
        a = np.asarray(axial_int, dtype=np.int64)
        t = np.asarray(lateral_int, dtype=np.int64)
        if np.any(np.abs(a) > A) or np.any(np.abs(t) > T):
            raise ValidationError("integer displacements outside the search range")
        rows = np.arange(len(a))
        D = self.table

        def lookup(da, dt):
            aa = np.clip(a + da, -A, A)
            tt = np.clip(t + dt, -T, T)
            return D[rows, self.index[aa + A, tt + T]]

        centre = lookup(0, 0)
        da = _parabola_offset(lookup(-1, 0), centre, lookup(1, 0), np.abs(a) < A)
        if T >= 1:
            dt = _parabola_offset(lookup(0, -1), centre, lookup(0, 1), np.abs(t) < T)
        else:
            dt = np.zeros(len(a))
        return a + da, t + dt


def _parabola_offset(left, centre, right, interior):
    """Vertex offset of the parabola through three equally spaced costs.

    Zero where the integer estimate sits on the search boundary, where the
    centre cost is already zero (an exact match), or where the three points
    are not convex.
    """
    curv = left - 2.0 * centre + right
    ok = interior & (centre > 0) & (curv > 0)
    delta = np.zeros(len(centre))
    delta[ok] = (left[ok] - right[ok]) / (2.0 * curv[ok])
    return np.clip(delta, -0.5, 0.5)


def _problem(fixed: RFFrame, moving: RFFrame, line_j: int, params: DpParams) -> _LineProblem:
    _check_pair(fixed, moving)
    m, l = fixed.shape
    if not 0 <= line_j < l:
        raise ValidationError(f"line index {line_j} outside [0, {l})")
    params.validate(m, l)
    f, g = normalized_pair(fixed, moving)
    return _LineProblem(f, g, line_j, params)


def _check_pair(fixed: RFFrame, moving: RFFrame) -> None:
    if fixed.shape != moving.shape:
        raise ValidationError(f"frame shapes differ: {fixed.shape} vs {moving.shape}")


def normalized_pair(fixed: RFFrame, moving: RFFrame) -> Tuple[np.ndarray, np.ndarray]:
    """Both frames scaled to unit RMS, as Fortran-ordered float64 arrays."""
    return _unit_rms(fixed.samples), _unit_rms(moving.samples)


def _unit_rms(x: np.ndarray) -> np.ndarray:
    rms = float(np.sqrt(np.mean(np.square(x))))
    out = np.asfortranarray(x, dtype=np.float64)
    return out / rms if rms > 0 else out.copy(order="F")


def dp_line(fixed: RFFrame, moving: RFFrame, line_j: int, params: DpParams = DpParams()) -> DpLineResult:
    """Globally optimal integer displacements along one RF line."""
    return _problem(fixed, moving, line_j, params).solve()


def brute_force_line(fixed: RFFrame, moving: RFFrame, line_j: int, params: DpParams = DpParams()) -> DpLineResult:
    """Exhaustive search over every displacement sequence; a test oracle.

    Costs are accumulated in the same order as the DP recursion so the optimal
    totals agree exactly, not just approximately.
    """
    prob = _problem(fixed, moving, line_j, params)
    D, trans = prob.table, prob.trans
    m, S = D.shape
    if S ** m > BRUTE_FORCE_LIMIT:
        raise ValidationError(f"{S}^{m} sequences exceed the enumeration limit of {BRUTE_FORCE_LIMIT}")

    # Sequences are indexed lexicographically by state index; a Python loop
    # over prefixes keeps every vectorised block under ~1e6 entries.
    prefix_len = 0
    while S ** (m - prefix_len) > 10 ** 6:
        prefix_len += 1
    best_cost = np.inf
    best_seq = None
    for prefix in itertools.product(range(S), repeat=prefix_len):
        if prefix:
            tot = np.array([D[0, prefix[0]]])
            for i in range(1, prefix_len):
                tot = (tot + trans[prefix[i - 1], prefix[i]]) + D[i, prefix[i]]
            last = np.array([prefix[-1]])
        else:
            tot = D[0].copy()
            last = np.arange(S)
        for i in range(max(prefix_len, 1), m):
            tot = ((tot[:, None] + trans[last, :]) + D[i][None, :]).ravel()
            last = np.tile(np.arange(S), len(tot) // S)
        k = int(np.argmin(tot))
        if tot[k] < best_cost:
            best_cost = float(tot[k])
            digits = []
            rest = k
            for _ in range(m - prefix_len):
                digits.append(rest % S)
                rest //= S
            best_seq = list(prefix) + digits[::-1]
    st = prob.states[np.array(best_seq)]
    return DpLineResult(st[:, 0].copy(), st[:, 1].copy(), best_cost)


def subsample_refine(fixed: RFFrame, moving: RFFrame, line_j: int, integer_disps,
                     params: DpParams = DpParams()) -> Tuple[np.ndarray, np.ndarray]:
    """Sub-sample (axial, lateral) displacements from a parabolic cost fit.

    ``integer_disps`` is a :class:`DpLineResult` or an ``(axial, lateral)``
    pair of integer arrays.
    """
    if isinstance(integer_disps, DpLineResult):
        a, t = integer_disps.axial, integer_disps.lateral
    else:
        a, t = integer_disps
    prob = _problem(fixed, moving, line_j, params)
    if len(a) != fixed.m or len(t) != fixed.m:
        raise ValidationError("need one integer displacement per axial sample")
    return prob.refine(a, t)


def choose_lines(l: int, p: int) -> np.ndarray:
    """``p`` equidistant line indices ``floor(l * (k + 0.5) / p)``."""
    if not 1 <= p <= l:
        raise ValidationError(f"p = {p} must lie in [1, {l}]")
    k = np.arange(p)
    return np.unique((l * (2 * k + 1)) // (2 * p))


def _estimate_line(f, g, j, params, subsample):
    prob = _LineProblem(f, g, j, params)
    res = prob.solve()
    if subsample:
        return prob.refine(res.axial, res.lateral)
    return res.axial.astype(np.float64), res.lateral.astype(np.float64)


def sparse_correspondences(fixed: RFFrame, moving: RFFrame, p: int, params: DpParams = DpParams(),
                           subsample: bool = True, threads: Optional[int] = 1) -> SparseCorrespondences:
    """Run DP (and sub-sample refinement) on ``p`` equidistant lines.

    Lines may be processed concurrently (``threads``); results are always
    assembled in ascending line order.
    """
    _check_pair(fixed, moving)
    fixed.require_estimable()
    m, l = fixed.shape
    lines = choose_lines(l, p)
    params.validate(m, l)
    f, g = normalized_pair(fixed, moving)

    def work(j):
        return _estimate_line(f, g, int(j), params, subsample)

    if threads is not None and threads > 1 and len(lines) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, lines))
    else:
        results = [work(j) for j in lines]
    axial = np.concatenate([r[0] for r in results])
    lateral = np.concatenate([r[1] for r in results])
    coords = np.column_stack([np.tile(np.arange(m), len(lines)), np.repeat(lines, m)])
    return SparseCorrespondences(coords, axial, lateral, lines, m, l)


def full_dp_field(fixed: RFFrame, moving: RFFrame, params: DpParams = DpParams(),
                  subsample: bool = True, threads: Optional[int] = 1) -> DisplacementField:
    """Dense field from DP on every line (the expensive baseline)."""
    sc = sparse_correspondences(fixed, moving, fixed.l, params, subsample, threads)
    m, l = fixed.shape
    return DisplacementField(
        sc.axial_disp.reshape((m, l), order="F"), sc.lateral_disp.reshape((m, l), order="F")
    )
