"""The full decoder: spatial filter bank, standardizer, linear SVM, threshold."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .classifier import LinearSvmModel, Standardizer, decision_score, standardize
from .xdawn import SpatialFilterBank, apply_filters

THRESHOLD_MODES = ("fixed", "calibrated")


@dataclass(frozen=True)
class DecoderModel:
    bank: SpatialFilterBank
    standardizer: Standardizer
    svm: LinearSvmModel
    threshold: float = 0.0
    threshold_mode: str = "fixed"
    config_hash: str = ""

    def __post_init__(self):
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ValueError(f"threshold_mode must be one of {THRESHOLD_MODES}")


def window_features(model: DecoderModel, window: np.ndarray) -> np.ndarray:
    """Standardized flattened spatio-temporal features of one averaged window."""
    return standardize(model.standardizer, apply_filters(window, model.bank).ravel())


def score_window(model: DecoderModel, window: np.ndarray) -> float:
    return float(decision_score(model.svm, window_features(model, window)))


def with_threshold(model: DecoderModel, threshold: float,
                   mode: str = "calibrated") -> DecoderModel:
    return replace(model, threshold=float(threshold), threshold_mode=mode)
