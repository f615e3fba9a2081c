"""Median wall-clock timings of the estimation stages.

Only estimation is timed; frames and basis are loaded (or simulated) before
the clock starts. Ratios are computed from timings taken in the same process.
"""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import kernels
from .basis import pca_glue_init
from .dp import DpParams, full_dp_field
from .refine import RefineParams, refine
from .types import PrincipalBasis, RFFrame, ValidationError

MIN_REPETITIONS = 5


def median_time(fn: Callable[[], object], repetitions: int) -> float:
    """Median of ``repetitions`` timed calls of ``fn`` in seconds."""
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def host_description() -> str:
    return f"{platform.node()}|{platform.machine()}|{platform.python_implementation()} {platform.python_version()}"


@dataclass
class BenchResult:
    m: int
    l: int
    N: int
    repetitions: int
    init_times: Dict[int, float]
    full_dp_time: float
    refine_time: Optional[float] = None
    host: str = field(default_factory=host_description)
    backend: str = kernels.BACKEND_NAME

    def ratio(self, p: int) -> float:
        """Full-image DP time over PCA-GLUE init time at ``p`` lines."""
        return self.full_dp_time / self.init_times[p]

    def records(self) -> List[Dict[str, object]]:
        base = dict(m=self.m, l=self.l, N=self.N, reps=self.repetitions, backend=self.backend, host=self.host)
        out = []
        for p, t in self.init_times.items():
            out.append(dict(stage="init", p=p, median_s=t, ratio_full_dp=self.ratio(p), **base))
        out.append(dict(stage="full-dp", p=self.l, median_s=self.full_dp_time, **base))
        if self.refine_time is not None:
            out.append(dict(stage="refine", p=min(self.init_times), median_s=self.refine_time, **base))
        return out


def format_record(rec: Dict[str, object]) -> str:
    """One ``key=value`` line; floats get 6 significant digits."""
    parts = []
    for k, v in rec.items():
        if isinstance(v, float):
            v = f"{v:.6g}"
        parts.append(f"{k}={str(v).replace(' ', '_')}")
    return " ".join(parts)


def run_bench(fixed: RFFrame, moving: RFFrame, basis: PrincipalBasis, p_list: Sequence[int] = (5,),
              repetitions: int = MIN_REPETITIONS, dp_params: DpParams = DpParams(),
              refine_params: Optional[RefineParams] = RefineParams(), threads: int = 1) -> BenchResult:
    """Time PCA-GLUE init at each ``p``, full-image DP and (optionally) refinement.

    Refinement is timed once per repetition starting from the init at the
    smallest ``p``; pass ``refine_params=None`` to skip it.
    """
    if repetitions < MIN_REPETITIONS:
        raise ValidationError(f"repetitions must be >= {MIN_REPETITIONS}, got {repetitions}")
    p_list = sorted(set(int(p) for p in p_list))
    if not p_list:
        raise ValidationError("p list is empty")
    init_times = {}
    for p in p_list:
        init_times[p] = median_time(
            lambda: pca_glue_init(fixed, moving, basis, p, dp_params, threads=threads), repetitions
        )
    full = median_time(lambda: full_dp_field(fixed, moving, dp_params, threads=threads), repetitions)
    ref_t = None
    if refine_params is not None:
        init = pca_glue_init(fixed, moving, basis, p_list[0], dp_params, threads=threads).field
        ref_t = median_time(lambda: refine(fixed, moving, init, refine_params), repetitions)
    return BenchResult(fixed.m, fixed.l, basis.N, repetitions, init_times, full, ref_t)
