"""Sparse-line DP plus PCA displacement estimation for ultrasound RF frames."""

from .basis import (
    InitResult,
    MotionReport,
    SparseLinesWarning,
    build_design_matrix,
    fit_sparse,
    lateral_bilinear,
    motion_report,
    pca_glue_init,
    reconstruct_axial,
    solve_weights,
    train_basis,
)
from .dp import (
    DpLineResult,
    DpParams,
    brute_force_line,
    choose_lines,
    dp_line,
    full_dp_field,
    sparse_correspondences,
    subsample_refine,
)
from .io import (
    FormatError,
    load_basis,
    load_field,
    load_frame,
    load_strain,
    save_basis,
    save_field,
    save_frame,
    save_strain,
)
from .kernels import BACKEND_NAME
from .phantom import Inclusion, MotionSpec, SceneSpec, ground_truth_field, simulate_pair, training_fields
from .refine import ClampWarning, RefineError, RefineParams, refine
from .strain import DegenerateWindowError, snr_cnr, strain
from .types import *  # noqa: F401,F403

__version__ = "0.1.0"
