"""Cramér-Rao-optimal spatial-mode imaging of incoherent sources."""

from spadeopt.grid import Grid, make_grid, inner_product
from spadeopt.psf import Psf, psf_amplitude, overlap_kernel, response_matrix
from spadeopt.sources import SourceBasis, SourceModel, point_array, rect_basis, square_basis, scenario
from spadeopt.modes import ModeSet, pixel_basis, orthonormalize, validate
from spadeopt.fisher import (
    FisherReport,
    ObjectiveConfig,
    detection_probs,
    fisher_matrix,
    crb,
    fisher_report,
    objective_and_gradient,
)
from spadeopt.quantum import DensityState, QfiReport, density_matrix, sld, qfi_and_qcrb
from spadeopt.stiefel import OptimizerOptions, OptimTrace, project_tangent, retract, minimize
from spadeopt.sampling import MeasurementRecord, sample_counts
from spadeopt.estimator import DesignSystem, stack_design, nnls
from spadeopt.adaptive import AdaptiveSchedule, AdaptiveResult, accumulate_fisher, run_adaptive

__version__ = "0.1.0"
