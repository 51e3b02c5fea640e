"""Linear and deep multi-view canonical correlation analysis."""

from .cca import (GccaModel, ProjectionModel, fit_cca2, fit_gcca, fit_mcca_sumcor,
                  fit_tcca, tcc_objective, transform)
from .data import MultiViewDataset, load_manifest, load_matrix, load_mfeat, synth_multiview
from .deep import (DgccaModel, DtccaModel, TrainConfig, depth_sweep, dgcca_fit,
                   dtcca_fit, dtcca_loss_and_grad, dtcca_transform)
from .evaluation import (AccuracyReport, LinearSVM, MethodSpec, make_splits, method_spec,
                         run_protocol, sweep)
from .exceptions import (ConfigError, ConvergenceError, DataError, MvccaError,
                         NumericalError, SingularCovarianceError, TensorSizeError,
                         TrainingDivergedError)
from .tensor import CpFactors, OuterSumTensor, cp_als

__all__ = [
    "AccuracyReport", "ConfigError", "ConvergenceError", "CpFactors", "DataError",
    "DgccaModel", "DtccaModel", "GccaModel", "LinearSVM", "MethodSpec", "MultiViewDataset",
    "MvccaError", "NumericalError", "OuterSumTensor", "ProjectionModel",
    "SingularCovarianceError", "TensorSizeError", "TrainConfig", "TrainingDivergedError",
    "cp_als", "depth_sweep", "dgcca_fit", "dtcca_fit", "dtcca_loss_and_grad",
    "dtcca_transform", "fit_cca2", "fit_gcca", "fit_mcca_sumcor", "fit_tcca",
    "load_manifest", "load_matrix", "load_mfeat", "make_splits", "method_spec",
    "run_protocol", "sweep", "synth_multiview", "tcc_objective", "transform",
]
