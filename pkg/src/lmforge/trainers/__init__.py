"""Desk-scale gradient training: a softmax classifier head over frozen
provider embeddings, and embedding-space distillation of a teacher into a
small student map, sharing one hand-rolled optimizer."""

from .classifier import (
    ClassifierHead,
    ClassifierTrainer,
    Prediction,
    TrainReport,
    classify,
    cross_entropy_loss_and_grads,
    train_classifier,
)
from .data import LabelEncoder, LoadedDataset, load_dataset
from .mimicker import (
    MimicReport,
    MimickerTrainer,
    StudentModel,
    hash_featurizer,
    mimic_loss_and_grads,
    student_forward,
    train_mimicker,
)
from .model_io import load_model, save_model
from .optim import Optimizer, OptimizerConfig

__all__ = [
    "ClassifierHead",
    "ClassifierTrainer",
    "Prediction",
    "TrainReport",
    "classify",
    "cross_entropy_loss_and_grads",
    "train_classifier",
    "LabelEncoder",
    "LoadedDataset",
    "load_dataset",
    "MimicReport",
    "MimickerTrainer",
    "StudentModel",
    "hash_featurizer",
    "mimic_loss_and_grads",
    "student_forward",
    "train_mimicker",
    "load_model",
    "save_model",
    "Optimizer",
    "OptimizerConfig",
]
