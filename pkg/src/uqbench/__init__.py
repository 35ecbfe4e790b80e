"""uqbench: confidence-aware gaze regression and uncertainty benchmarking.

A desk-scale pipeline: render synthetic eye images, train a small CNN
that predicts gaze angles together with per-angle variances, then score
how well the predicted uncertainty tracks controlled image corruption.
"""

from .corruptions import (
    DEFAULT_TABLES,
    KINDS,
    CorruptionSpec,
    apply_corruption,
    corrupt_sample,
    off_crop,
)
from .metrics import (
    EffectivenessReport,
    SweepConfig,
    angular_error,
    effectiveness_score,
    evaluate_effectiveness,
    ls_slope,
    quantile_report,
    run_severity_sweep,
    spearman,
)
from .model import (
    GazeEstimate,
    GazeNet,
    TrainConfig,
    load_checkpoint,
    nll_loss,
    save_checkpoint,
    smooth_l1,
    train,
)
from .synth import EyeSample, generate_dataset, load_dataset, make_samples, render_eye

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TABLES",
    "KINDS",
    "CorruptionSpec",
    "apply_corruption",
    "corrupt_sample",
    "off_crop",
    "EffectivenessReport",
    "SweepConfig",
    "angular_error",
    "effectiveness_score",
    "evaluate_effectiveness",
    "ls_slope",
    "quantile_report",
    "run_severity_sweep",
    "spearman",
    "GazeEstimate",
    "GazeNet",
    "TrainConfig",
    "load_checkpoint",
    "nll_loss",
    "save_checkpoint",
    "smooth_l1",
    "train",
    "EyeSample",
    "generate_dataset",
    "load_dataset",
    "make_samples",
    "render_eye",
    "__version__",
]
