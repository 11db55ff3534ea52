"""Spatial filters that maximize evoked-response variance against overall activity.

The filters solve Cs v = lambda Cx v, where Cs is the rank-one covariance
of the mean target window and Cx is the regularized mean covariance of all
windows. Projections onto the leading eigenvectors concentrate the evoked
response into a few virtual channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import generalized_eigh
from .preprocess import EpochSet

REGULARIZATION_EPS = 1e-6


@dataclass(frozen=True)
class SpatialFilterBank:
    filters: np.ndarray       # n_filters x n_channels
    eigenvalues: np.ndarray   # descending, length n_filters
    n_channels: int


def _as_windows(epochs) -> np.ndarray:
    """Accept an EpochSet or any sequence of channels x samples arrays."""
    if isinstance(epochs, EpochSet):
        return epochs.stack()
    arr = [np.asarray(w, dtype=float) for w in epochs]
    if not arr:
        raise ValueError("need at least one epoch")
    return np.stack(arr)


def fit_xdawn(target_epochs, all_epochs, n_filters: int = 5) -> SpatialFilterBank:
    targets = _as_windows(target_epochs)
    overall = _as_windows(all_epochs)
    if len(targets) < 2 or len(overall) < 2:
        raise ValueError("need at least 2 target and 2 overall epochs")
    if targets.shape[1:] != overall.shape[1:]:
        raise ValueError("target and overall epochs must share geometry")
    n_channels, t = targets.shape[1:]
    if not (1 <= n_filters <= n_channels):
        raise ValueError(f"n_filters must be in 1..{n_channels}")

    p_mean = targets.mean(axis=0)
    cs = p_mean @ p_mean.T / t
    cx = np.einsum("ect,eut->cu", overall, overall) / (t * len(overall))
    cx = 0.5 * (cx + cx.T)
    cx += REGULARIZATION_EPS * np.trace(cx) / n_channels * np.eye(n_channels)

    eigvals, vecs = generalized_eigh(cs, cx)
    eigvals = np.maximum(eigvals[:n_filters], 0.0)
    filters = vecs[:, :n_filters].T.copy()

    # sign convention: the response to the mean target window peaks positive
    for i, f in enumerate(filters):
        response = f @ p_mean
        peak = response[np.argmax(np.abs(response))]
        if peak < 0:
            filters[i] = -f
    return SpatialFilterBank(filters, eigvals, n_channels)


def apply_filters(window: np.ndarray, bank: SpatialFilterBank) -> np.ndarray:
    window = np.asarray(window, dtype=float)
    if window.ndim != 2 or window.shape[0] != bank.n_channels:
        raise ValueError(
            f"window must be {bank.n_channels} x T, got {window.shape}")
    return bank.filters @ window
