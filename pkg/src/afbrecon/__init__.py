"""Compressed-sensing parallel-MRI reconstruction toolkit.

Synthetic multi-coil acquisitions, three undersampling mask families, a
sensitivity-weighted Fourier forward model with smoothed edge penalties,
an adaptive forward-backward solver with extrapolation, quality metrics,
a composite multi-term loss, bit-exact file containers, and a batch CLI.
"""

from .acquisition import (MASK_KINDS, CoilSet, PhantomSpec, SamplingMask, make_coil_maps,
                          make_mask, make_phantom, simulate_acquisition)
from .errors import DimensionError, FormatError, NumericalFailure, ParameterError
from .io import (GRID_KINDS, REPORT_COLUMNS, SweepRow, export_png, load_grid, read_report_csv,
                 save_grid, write_report_csv)
from .metrics import (CompositeLossReport, LossWeights, MetricReport, ModalityMapping,
                      affine_mapping, composite_loss, identity_mapping, magnitude,
                      metric_report, psnr, relative_error, ssim)
from .model import REG_FAMILIES, ForwardModel, Objective, Regularizer
from .numerics import as_complex_grid, as_real_grid, fft2, ifft2, inner, norm2
from .solver import (IterationRecord, PhaseSchedule, ScoreEntry, SolverConfig, SolverTrace,
                     TaskSpec, adapt, default_config, reconstruct)

__version__ = "0.1.0"

__all__ = [
    "MASK_KINDS", "CoilSet", "PhantomSpec", "SamplingMask", "make_coil_maps", "make_mask",
    "make_phantom", "simulate_acquisition",
    "DimensionError", "FormatError", "NumericalFailure", "ParameterError",
    "GRID_KINDS", "REPORT_COLUMNS", "SweepRow", "export_png", "load_grid", "read_report_csv",
    "save_grid", "write_report_csv",
    "CompositeLossReport", "LossWeights", "MetricReport", "ModalityMapping", "affine_mapping",
    "composite_loss", "identity_mapping", "magnitude", "metric_report", "psnr",
    "relative_error", "ssim",
    "REG_FAMILIES", "ForwardModel", "Objective", "Regularizer",
    "as_complex_grid", "as_real_grid", "fft2", "ifft2", "inner", "norm2",
    "IterationRecord", "PhaseSchedule", "ScoreEntry", "SolverConfig", "SolverTrace", "TaskSpec",
    "adapt", "default_config", "reconstruct",
    "__version__",
]
