"""Command-line front end.

Exit status: 0 on success, 2 for usage or validation errors (including
unreadable input files), 3 when a computation fails.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import io
from .basis import fit_sparse, motion_report, train_basis
from .bench import MIN_REPETITIONS, format_record, run_bench
from .dp import DpParams, full_dp_field, sparse_correspondences
from .phantom import (
    MOTION_KINDS,
    Inclusion,
    MotionSpec,
    SceneSpec,
    ground_truth_field,
    simulate_pair,
    training_fields,
    training_scenes,
)
from .refine import RefineParams, refine
from .strain import snr_cnr, strain, window_from_mm
from .types import DisplacementField, ValidationError, Window

EXIT_OK, EXIT_USAGE, EXIT_COMPUTE = 0, 2, 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Stage:
    """Tag errors raised inside a ``with`` block with the stage name and exit code."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None or isinstance(exc, CliError):
            return False
        if isinstance(exc, FileNotFoundError):
            raise CliError(EXIT_USAGE, f"{self.name}: no such file: {exc.filename}") from exc
        if isinstance(exc, (ValidationError, OSError)):
            raise CliError(EXIT_USAGE, f"{self.name}: {exc}") from exc
        if isinstance(exc, Exception):
            raise CliError(EXIT_COMPUTE, f"{self.name}: {type(exc).__name__}: {exc}") from exc
        return False


def _emit(key: str, value) -> None:
    if isinstance(value, float):
        value = f"{value:.6g}"
    print(f"{key}={value}")


def _dp_params(args) -> DpParams:
    return DpParams(args.max_axial, args.max_lateral, args.smoothness, args.data_window)


def _refine_params(args) -> RefineParams:
    return RefineParams(axial_reg=args.axial_reg, lateral_reg=args.lateral_reg, iterations=args.iterations)


def _add_dp_flags(p: argparse.ArgumentParser) -> None:
    d = DpParams()
    g = p.add_argument_group("dynamic programming")
    g.add_argument("--max-axial", type=int, default=d.max_axial_disp, help="axial search range in samples")
    g.add_argument("--max-lateral", type=int, default=d.max_lateral_disp, help="lateral search range in lines")
    g.add_argument("--smoothness", type=float, default=d.smoothness_weight, help="DP smoothness weight")
    g.add_argument("--data-window", type=int, default=d.data_window, help="odd DP matching window length")


def _add_refine_flags(p: argparse.ArgumentParser) -> None:
    r = RefineParams()
    g = p.add_argument_group("refinement")
    g.add_argument("--refine", dest="refine", action="store_true", default=True,
                   help="run global refinement (default)")
    g.add_argument("--no-refine", dest="refine", action="store_false", help="skip global refinement")
    g.add_argument("--axial-reg", type=float, default=r.axial_reg, help="axial smoothness weight alpha")
    g.add_argument("--lateral-reg", type=float, default=r.lateral_reg, help="lateral smoothness weight beta")
    g.add_argument("--iterations", type=int, default=r.iterations, help="linearization passes (1 to 3)")


def _add_threads(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker cap for per-line DP (default: available cores)")


def _read_config(path: Optional[str]) -> Dict[str, str]:
    if path is None:
        return {}
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


_SCENE_KEYS = {
    "depth": int, "width": int, "density": float, "psf_freq": float, "psf_axial_sigma": float,
    "psf_lateral_sigma": float, "seed": int, "noise_db": float, "aspect": float, "motion": str,
    "magnitude": float, "inclusion": str,
}


def _scene_settings(args) -> Dict[str, object]:
    cfg = _read_config(args.config)
    unknown = set(cfg) - set(_SCENE_KEYS)
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = {}
    for key, conv in _SCENE_KEYS.items():
        flag = getattr(args, key)
        if flag is not None:
            out[key] = flag
        elif key in cfg:
            try:
                out[key] = conv(cfg[key])
            except ValueError:
                raise ValidationError(f"config value {key}={cfg[key]!r} is not a valid {conv.__name__}") from None
    return out


def _parse_inclusion(text: Optional[str]) -> Optional[Inclusion]:
    if not text:
        return None
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        vals = []
    if len(vals) not in (3, 4):
        raise ValidationError(f"inclusion must be row,col,radius[,stiffness]; got {text!r}")
    return Inclusion(*vals)


def cmd_simulate(args) -> int:
    with _Stage("simulate"):
        s = _scene_settings(args)
        m, l = s.get("depth", 512), s.get("width", 64)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.training_set:
            return _simulate_training(args, m, l, s, out)
        scene = SceneSpec(
            m, l,
            scatterer_density=s.get("density", 2.0),
            psf_axial_freq=s.get("psf_freq", 0.25),
            psf_axial_sigma=s.get("psf_axial_sigma", 2.0),
            psf_lateral_sigma=s.get("psf_lateral_sigma", 1.0),
            inclusion=_parse_inclusion(s.get("inclusion")),
            seed=s.get("seed", 0),
            noise_db=s.get("noise_db"),
            aspect=s.get("aspect", 6.0),
        )
        motion = MotionSpec(s.get("motion", "axial-compression"), s.get("magnitude", 4.0))
        fixed, moving, truth = simulate_pair(scene, motion)
        io.save_frame(fixed, out / "fixed.elrf")
        io.save_frame(moving, out / "moving.elrf")
        io.save_field(truth, out / "truth.eldf")
    _emit("fixed", out / "fixed.elrf")
    _emit("moving", out / "moving.elrf")
    _emit("truth", out / "truth.eldf")
    return EXIT_OK


def _simulate_training(args, m, l, s, out) -> int:
    seed, aspect = s.get("seed", 0), s.get("aspect", 6.0)
    if not args.estimated:
        fields = training_fields(m, l, args.training_set, seed=seed, aspect=aspect)
    else:
        fields = []
        for scene, motion in training_scenes(m, l, args.training_set, seed=seed, aspect=aspect):
            scene = SceneSpec(m, l, inclusion=scene.inclusion, seed=scene.seed, aspect=aspect,
                              noise_db=s.get("noise_db"))
            fixed, moving, _ = simulate_pair(scene, motion)
            init = full_dp_field(fixed, moving, threads=args.threads)
            fields.append(refine(fixed, moving, init))
    for k, fld in enumerate(fields):
        io.save_field(fld, out / f"train_{k:04d}.eldf")
    _emit("count", len(fields))
    _emit("dir", out)
    return EXIT_OK


def cmd_train(args) -> int:
    with _Stage("train"):
        paths: List[Path] = []
        for src in args.inputs:
            src = Path(src)
            if src.is_dir():
                paths.extend(sorted(src.glob("*.eldf")))
            else:
                paths.append(src)
        if not paths:
            raise ValidationError("no .eldf training fields found")
        fields = [io.load_field(p) for p in paths]
        basis = train_basis(fields, args.variance, args.components, label_modes=not args.no_labels,
                            aspect=args.aspect)
        io.save_basis(basis, args.out)
    _emit("fields", len(fields))
    _emit("N", basis.N)
    _emit("explained_variance_ratio", basis.explained_variance_ratio)
    for n in range(basis.N):
        print(f"component={n} singular_value={basis.singular_values[n]:.6g} label={basis.label(n)}")
    return EXIT_OK


def _load_pair(args):
    with _Stage("load"):
        fixed = io.load_frame(args.fixed)
        moving = io.load_frame(args.moving)
        if fixed.shape != moving.shape:
            raise ValidationError(f"frame shapes differ: {fixed.shape} vs {moving.shape}")
    return fixed, moving


def _finish_field(args, fixed, moving, field, times) -> DisplacementField:
    if args.refine:
        with _Stage("refine"):
            t0 = time.perf_counter()
            field = refine(fixed, moving, field, _refine_params(args))
            times["refine"] = time.perf_counter() - t0
    with _Stage("write"):
        io.save_field(field, args.out)
    if args.truth:
        with _Stage("truth"):
            truth = io.load_field(args.truth)
            if truth.shape != field.shape:
                raise ValidationError(f"truth {truth.shape} does not match {field.shape}")
        _emit("median_abs_axial_error", float(np.median(np.abs(field.axial - truth.axial))))
    for stage, t in times.items():
        _emit(f"time_{stage}_s", t)
    _emit("out", args.out)
    return field


def cmd_estimate(args) -> int:
    with _Stage("load"):
        basis = io.load_basis(args.basis)
    fixed, moving = _load_pair(args)
    times = {}
    with _Stage("dp"):
        t0 = time.perf_counter()
        sparse = sparse_correspondences(fixed, moving, args.lines, _dp_params(args), threads=args.threads)
        times["dp"] = time.perf_counter() - t0
    with _Stage("fit"):
        t0 = time.perf_counter()
        init = fit_sparse(basis, sparse, args.ridge)
        times["fit"] = time.perf_counter() - t0
    report = motion_report(init.weights, basis)
    for n, w in enumerate(init.weights.w):
        print(f"weight={n} value={w:.6g} fraction={report.fractions[n]:.6g} label={report.labels[n]}")
    _emit("residual", init.residual)
    _emit("dominant_mode", report.dominant_label if report.dominant is not None else "none")
    _finish_field(args, fixed, moving, init.field, times)
    return EXIT_OK


def cmd_dp_full(args) -> int:
    fixed, moving = _load_pair(args)
    times = {}
    with _Stage("dp"):
        t0 = time.perf_counter()
        field = full_dp_field(fixed, moving, _dp_params(args), threads=args.threads)
        times["dp"] = time.perf_counter() - t0
    _finish_field(args, fixed, moving, field, times)
    return EXIT_OK


def cmd_strain(args) -> int:
    with _Stage("load"):
        field = io.load_field(args.field)
    with _Stage("strain"):
        img = strain(field, args.window)
    with _Stage("write"):
        io.save_strain(img, args.out)
    _emit("window", args.window)
    _emit("out", args.out)
    return EXIT_OK


def _window(text: str, args) -> Window:
    if args.units == "samples":
        return Window.parse(text)
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        vals = []
    if len(vals) != 4:
        raise ValidationError(f"window must be row,col,height,width; got {text!r}")
    return window_from_mm(*vals, args.axial_spacing, args.lateral_spacing)


def cmd_metrics(args) -> int:
    with _Stage("load"):
        img = io.load_strain(args.strain)
    with _Stage("metrics"):
        target = _window(args.target, args)
        background = _window(args.background, args)
        rep = snr_cnr(img, target, background)
    rec = dict(target="{},{},{},{}".format(*vars(target).values()),
               background="{},{},{},{}".format(*vars(background).values()), **rep.as_records())
    line = format_record(rec)
    print(line)
    if args.out:
        with _Stage("write"):
            Path(args.out).write_text(line + "\n", encoding="utf-8")
    return EXIT_OK


def _int_list(text: str) -> List[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise ValidationError("empty list")
    return vals


def cmd_bench(args) -> int:
    with _Stage("bench"):
        if args.repetitions < MIN_REPETITIONS:
            raise ValidationError(f"repetitions must be >= {MIN_REPETITIONS}, got {args.repetitions}")
        p_list = _int_list(args.p_list)
    if args.simulate:
        with _Stage("simulate"):
            m, l = args.simulate
            scene = SceneSpec(m, l, seed=args.seed, noise_db=30.0)
            fixed, moving, _ = simulate_pair(scene, MotionSpec("axial-compression", min(8.0, m / 16)))
            basis = train_basis(training_fields(m, l, args.train_count, seed=args.seed + 1),
                                max_components=args.components)
    else:
        if not (args.fixed and args.moving and args.basis):
            raise CliError(EXIT_USAGE, "bench: give fixed, moving and basis files or --simulate M L")
        fixed, moving = _load_pair(args)
        with _Stage("load"):
            basis = io.load_basis(args.basis)
    with _Stage("bench"):
        res = run_bench(fixed, moving, basis, p_list, args.repetitions, _dp_params(args),
                        _refine_params(args) if args.refine else None, threads=args.threads)
    lines = [format_record(r) for r in res.records()]
    print("\n".join(lines))
    if args.out:
        with _Stage("write"):
            Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcaglue",
        description="Displacement and strain estimation from RF frame pairs via sparse DP and PCA.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic frame pair or a training set")
    p.add_argument("--config", help="key=value file with scene and motion settings (flags override)")
    p.add_argument("--depth", type=int, help="samples per line m (default 512)")
    p.add_argument("--width", type=int, help="number of lines l (default 64)")
    p.add_argument("--density", type=float, help="scatterers per sample cell (default 2)")
    p.add_argument("--psf-freq", type=float, help="pulse cycles per sample (default 0.25)")
    p.add_argument("--psf-axial-sigma", type=float, help="axial PSF width in samples (default 2)")
    p.add_argument("--psf-lateral-sigma", type=float, help="lateral PSF width in lines (default 1)")
    p.add_argument("--seed", type=int, help="speckle and noise seed (default 0)")
    p.add_argument("--noise-db", type=float, help="add white noise at this SNR in dB (default none)")
    p.add_argument("--aspect", type=float, help="axial samples per line spacing (default 6)")
    p.add_argument("--motion", choices=MOTION_KINDS, help="motion kind (default axial-compression)")
    p.add_argument("--magnitude", type=float, help="motion magnitude (default 4)")
    p.add_argument("--inclusion", help="row,col,radius[,stiffness] of a stiff inclusion")
    p.add_argument("--training-set", type=int, metavar="N", help="write N training fields instead of a pair")
    p.add_argument("--estimated", action="store_true",
                   help="with --training-set: store full-DP plus refinement estimates, not ground truth")
    _add_threads(p)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="learn a PCA basis from displacement fields")
    p.add_argument("inputs", nargs="+", help=".eldf files or directories containing them")
    p.add_argument("--components", "-n", type=int, default=12, help="component cap (default 12)")
    p.add_argument("--variance", type=float, default=0.95, help="explained-variance target (default 0.95)")
    p.add_argument("--aspect", type=float, default=6.0, help="aspect used to label modes")
    p.add_argument("--no-labels", action="store_true", help="leave components unlabeled")
    p.add_argument("--out", default="basis.elpb", help="output basis file")
    p.set_defaults(func=cmd_train)

    for name, func, text in (("estimate", cmd_estimate, "PCA-GLUE estimate from sparse lines"),
                             ("dp-full", cmd_dp_full, "baseline estimate from DP on every line")):
        p = sub.add_parser(name, help=text)
        p.add_argument("fixed", help="fixed frame (.elrf)")
        p.add_argument("moving", help="moving frame (.elrf)")
        if name == "estimate":
            p.add_argument("basis", help="PCA basis (.elpb)")
            p.add_argument("--lines", "-p", type=int, default=5, help="number of DP lines (default 5)")
            p.add_argument("--ridge", type=float, default=None, help="weight ridge (default automatic)")
        _add_dp_flags(p)
        _add_refine_flags(p)
        _add_threads(p)
        p.add_argument("--truth", help="ground-truth field; prints the median axial error")
        p.add_argument("--out", default="field.eldf", help="output field file")
        p.set_defaults(func=func)

    p = sub.add_parser("strain", help="axial strain from a displacement field")
    p.add_argument("field", help="displacement field (.eldf)")
    p.add_argument("--window", type=int, default=43, help="odd differentiation window (default 43)")
    p.add_argument("--out", default="strain.elsf", help="output strain file")
    p.set_defaults(func=cmd_strain)

    p = sub.add_parser("metrics", help="SNR and CNR of a strain image")
    p.add_argument("strain", help="strain image (.elsf)")
    p.add_argument("--target", required=True, help="row,col,height,width")
    p.add_argument("--background", required=True, help="row,col,height,width")
    p.add_argument("--units", choices=("samples", "mm"), default="samples", help="window units")
    p.add_argument("--axial-spacing", type=float, help="mm per sample (needed for --units mm)")
    p.add_argument("--lateral-spacing", type=float, help="mm per line (needed for --units mm)")
    p.add_argument("--out", help="also write the key=value record here")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bench", help="median stage timings and full-DP speed ratios")
    p.add_argument("fixed", nargs="?", help="fixed frame (.elrf)")
    p.add_argument("moving", nargs="?", help="moving frame (.elrf)")
    p.add_argument("basis", nargs="?", help="PCA basis (.elpb)")
    p.add_argument("--simulate", type=int, nargs=2, metavar=("M", "L"),
                   help="time a simulated M x L compression pair with a freshly trained basis")
    p.add_argument("--train-count", type=int, default=60, help="training fields for --simulate")
    p.add_argument("--components", "-n", type=int, default=12, help="component cap for --simulate")
    p.add_argument("--seed", type=int, default=0, help="seed for --simulate")
    p.add_argument("--p-list", default="5,15,30", help="comma-separated line counts (default 5,15,30)")
    p.add_argument("--repetitions", type=int, default=MIN_REPETITIONS, help="timed runs per stage (>= 5)")
    _add_dp_flags(p)
    _add_refine_flags(p)
    _add_threads(p)
    p.add_argument("--out", help="also write the records here")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"pcaglue {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
