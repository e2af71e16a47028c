"""FDC-informed LSTM streamflow modeling for ungauged basins and regions.

The package covers the full pipeline: CAMELS-format ingestion, flow duration
curves with nearest-basin migration, a reverse-mode autodiff tensor core, the
CNN-encoder + LSTM network, seeded training, the three holdout protocols
(temporal, basin k-fold, regional), input-selection ensembles, hydrologic
metrics, a linear-reservoir synthetic world generator, and a CLI.
"""

from ._version import __version__
from .catalog import (
    BasinRecord,
    Catalog,
    DailySeries,
    DateRange,
    NormEntry,
    NormStats,
    fit_norm_stats,
    load_catalog,
    load_daily,
)
from .errors import ConfigError, DataError
from .experiments import (
    EnsembleSpec,
    EvalReport,
    FdcStore,
    SplitPlan,
    apply_fdc_scenario,
    make_pub_kfold,
    make_pur_splits,
    make_temporal_split,
    run_ensemble,
)
from .fdc import Fdc, build_availability, compute_fdc, migrate_fdc, normalize_fdc
from .metrics import MetricValue, acf1, baseflow_index, kge, median, nse
from .network import EncoderConfig, ModelConfig, StreamflowModel, forward, init_model
from .synth import SynthBasinSpec, make_world, simulate
from .tensor import Tensor
from .training import TrainConfig, build_train_data, predict, sample_batch, train

__all__ = [
    "__version__",
    "BasinRecord",
    "Catalog",
    "DailySeries",
    "DateRange",
    "NormEntry",
    "NormStats",
    "fit_norm_stats",
    "load_catalog",
    "load_daily",
    "ConfigError",
    "DataError",
    "EnsembleSpec",
    "EvalReport",
    "FdcStore",
    "SplitPlan",
    "apply_fdc_scenario",
    "make_pub_kfold",
    "make_pur_splits",
    "make_temporal_split",
    "run_ensemble",
    "Fdc",
    "build_availability",
    "compute_fdc",
    "migrate_fdc",
    "normalize_fdc",
    "MetricValue",
    "acf1",
    "baseflow_index",
    "kge",
    "median",
    "nse",
    "EncoderConfig",
    "ModelConfig",
    "StreamflowModel",
    "forward",
    "init_model",
    "SynthBasinSpec",
    "make_world",
    "simulate",
    "Tensor",
    "TrainConfig",
    "build_train_data",
    "predict",
    "sample_batch",
    "train",
]
