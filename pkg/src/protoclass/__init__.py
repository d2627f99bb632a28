"""protoclass: unsupervised classification from raw feature vectors.

Three stages: contrastive self-supervised pre-training of an encoder,
silhouette-guided dimensionality reduction + k-means to sample
centroid-nearest prototypes, and semi-supervised fine-tuning that treats the
prototypes as noisy labels with confidence-masked consistency on the rest.
"""

__version__ = "0.1.0"

from .augment import AugmentConfig, transform
from .checkpoint import load_checkpoint, save_checkpoint
from .clustering import ClusterModel, kmeans, silhouette
from .config import ConfigError, PipelineConfig, load_config, parse_config
from .data import SampleStore, SynthConfig, TrainView, export_csv, generate, ingest_csv
from .finetune import (
    SftConfig,
    UnlabeledBatchOutput,
    confidence_masked_batch,
    consistency_loss,
    predict,
    proto_loss,
    run_sft,
)
from .metrics import MetricsReport, hungarian_accuracy, nmi, purity, report
from .net import (
    OptimState,
    ParamSet,
    ema_params,
    ema_update,
    forward_encoder,
    forward_projection,
    init_params,
    make_optimizer,
    sgd_step,
    softmax_xent,
)
from .pipeline import run_pipeline
from .pretrain import CptConfig, ntxent_loss, run_cpt
from .prototypes import PrototypeSet, embed_all, sample_prototypes, sweep_silhouette
from .reduction import DRConfig, EmbeddingSet, project

__all__ = [
    "AugmentConfig",
    "ClusterModel",
    "ConfigError",
    "CptConfig",
    "DRConfig",
    "EmbeddingSet",
    "MetricsReport",
    "OptimState",
    "ParamSet",
    "PipelineConfig",
    "PrototypeSet",
    "SampleStore",
    "SftConfig",
    "SynthConfig",
    "TrainView",
    "UnlabeledBatchOutput",
    "confidence_masked_batch",
    "consistency_loss",
    "ema_params",
    "ema_update",
    "embed_all",
    "export_csv",
    "forward_encoder",
    "forward_projection",
    "generate",
    "hungarian_accuracy",
    "ingest_csv",
    "init_params",
    "kmeans",
    "load_checkpoint",
    "load_config",
    "make_optimizer",
    "nmi",
    "ntxent_loss",
    "parse_config",
    "predict",
    "project",
    "proto_loss",
    "purity",
    "report",
    "run_cpt",
    "run_pipeline",
    "run_sft",
    "sample_prototypes",
    "save_checkpoint",
    "sgd_step",
    "silhouette",
    "softmax_xent",
    "sweep_silhouette",
    "transform",
]
