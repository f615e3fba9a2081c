"""Compare the compiled and numpy kernel backends on one simulated pair.

    python3 benchmarks/bench_kernels.py --depth 1024 --width 128

Prints one key=value record per kernel with the median time of each backend
and their ratio. Both backends must produce the same DP cost.
"""

import argparse
import sys

import numpy as np

from pcaglue import kernels
from pcaglue.bench import format_record, median_time
from pcaglue.dp import DpParams, normalized_pair
from pcaglue.phantom import MotionSpec, SceneSpec, _scatterers, simulate_pair


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--depth", type=int, default=1024)
    ap.add_argument("--width", type=int, default=128)
    ap.add_argument("--repetitions", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels.compiled_backend is None:
        print("compiled backend unavailable; nothing to compare", file=sys.stderr)
        return 1

    scene = SceneSpec(args.depth, args.width, seed=0)
    fixed, moving, _ = simulate_pair(scene, MotionSpec("axial-compression", 4.0))
    f, g = normalized_pair(fixed, moving)
    params = DpParams()
    states = params.states()
    trans = params.transition_costs(states)
    sa = np.ascontiguousarray(states[:, 0])
    st = np.ascontiguousarray(states[:, 1])
    j = args.width // 2
    col = np.ascontiguousarray(f[:, j])
    half = params.data_window // 2
    z, x, amp = _scatterers(scene, np.random.default_rng(0))
    render_args = (z, x, amp, scene.m, scene.l, scene.psf_axial_freq, scene.psf_axial_sigma,
                   scene.psf_lateral_sigma, 3 * scene.psf_axial_sigma, 3 * scene.psf_lateral_sigma)

    D = kernels.compiled_backend.data_table(col, g, j, sa, st, half)
    costs = {}
    cases = {
        "data_table": lambda b: b.data_table(col, g, j, sa, st, half),
        "dp_solve": lambda b: costs.setdefault(b.__name__, b.dp_solve(D, trans)[1]),
        "render": lambda b: b.render(*render_args),
    }
    for name, fn in cases.items():
        tc = median_time(lambda: fn(kernels.compiled_backend), args.repetitions)
        tp = median_time(lambda: fn(kernels.python_backend), args.repetitions)
        print(format_record(dict(kernel=name, m=args.depth, l=args.width, compiled_s=tc, python_s=tp,
                                 speedup=tp / tc)))
    same = len(set(costs.values())) == 1
    print(format_record(dict(check="dp_cost_identical", ok=same)))
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
