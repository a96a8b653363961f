"""GRASP amodal segmentation toolkit."""

from ._grasp import (
    ConfigError,
    Dataset,
    DimensionError,
    GraspError,
    IntegrityError,
    IoError,
    Model,
    NumericError,
    __version__,
    ablate,
    edt_squared,
    evaluate,
    gate_values,
    iou,
    perturb_vm,
    pool_to_grid,
    probe,
    ridge_fit,
    run_cli,
    sdf,
    train,
)

__all__ = [
    "ConfigError",
    "Dataset",
    "DimensionError",
    "GraspError",
    "IntegrityError",
    "IoError",
    "Model",
    "NumericError",
    "__version__",
    "ablate",
    "edt_squared",
    "evaluate",
    "gate_values",
    "iou",
    "perturb_vm",
    "pool_to_grid",
    "probe",
    "ridge_fit",
    "run_cli",
    "sdf",
    "train",
]
