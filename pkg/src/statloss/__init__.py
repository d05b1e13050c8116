"""Distribution-level statistical loss for discriminative feature learning."""

from .class_stats import ClassBatch, BatchStats, batch_stats, hotelling_t2
from .stat_loss import LossConfig, LossReport, loss_total
from .model import TrainConfig, NetworkState, fit, predict, embed
from .data import Dataset, GaussianSpec, synth_gaussians, stratified_split
from .evaluation import confusion, metrics, mcnemar

__version__ = "0.1.0"
