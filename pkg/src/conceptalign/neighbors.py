"""Exact k-nearest-neighbour classification under the L1 distance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_labels, check_matrix
from .exceptions import DimensionMismatch, EmptyTrainingSet, LengthMismatch


@dataclass(frozen=True, eq=False)
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int = 1


def knn_train(X, y, k=1):
    if np.asarray(X).shape[0] == 0:
        raise EmptyTrainingSet("cannot fit a nearest-neighbour model on 0 rows")
    X = check_matrix(X, "X")
    y = check_labels(y, X.shape[0])
    if k < 1:
        raise ValueError("k must be >= 1")
    return KnnModel(X, y, min(k, X.shape[0]))


def l1_distances(Q, X):
    return cdist(Q, X, metric="cityblock")


def nearest_index(D):
    """Column of the smallest distance per row; ties go to the lowest index."""
    return np.argmin(D, axis=1)


def knn_classify(model, Q):
    """Predict labels; distance ties resolve to the lowest training index.

    For ``k > 1`` the majority label wins, and a tied vote goes to the tied
    label whose nearest member ranks first.
    """
    Q = check_matrix(Q, "Q")
    if Q.shape[1] != model.X.shape[1]:
        raise DimensionMismatch(
            f"queries have {Q.shape[1]} columns, model has {model.X.shape[1]}")
    D = l1_distances(Q, model.X)
    if model.k == 1:
        return model.y[nearest_index(D)]
    order = np.argsort(D, axis=1, kind="stable")[:, :model.k]
    out = np.empty(Q.shape[0], dtype=model.y.dtype)
    for i, idx in enumerate(order):
        votes = model.y[idx]
        labels, first, counts = np.unique(votes, return_index=True,
                                          return_counts=True)
        winners = np.flatnonzero(counts == counts.max())
        out[i] = labels[winners[np.argmin(first[winners])]]
    return out


def accuracy(predicted, truth):
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise LengthMismatch(f"{predicted.shape} vs {truth.shape}")
    if predicted.size == 0:
        raise LengthMismatch("cannot score empty label vectors")
    return float(np.mean(predicted == truth))


class L1NearestNeighborClassifier(ClassifierMixin, BaseEstimator):
    """k-NN classifier with exact L1 distances and index-ordered tie-breaking.

    Parameters
    ----------
    n_neighbors : int, default=1
    """

    def __init__(self, n_neighbors=1):
        self.n_neighbors = n_neighbors

    def fit(self, X, y):
        self.model_ = knn_train(X, y, self.n_neighbors)
        self.classes_ = np.unique(self.model_.y)
        self.n_features_in_ = self.model_.X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return knn_classify(self.model_, X)
