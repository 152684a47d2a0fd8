"""Damage detection and localisation from measured strain vectors.

Two stages work from the same 12-channel strain measurement.  A principal
component novelty detector supplies the probability that the structure is
undamaged, and a small feed-forward network distributes the complement over
the eight monitored diagonals.  ``fuse_belief`` combines the two outputs
into a belief over all 256 health states, concentrated on the undamaged
state and the eight single-failure states.
"""

from __future__ import annotations

import json
import math
import os
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .optim import OptimizationError, minimize_gd, minimize_scg

__all__ = [
    "GaussianNoveltyDetector",
    "MlpLocaliser",
    "novelty_probability",
    "fuse_belief",
    "SINGLE_FAILURE_DECIMALS",
    "load_model",
]

# Health-state decimals reachable by a belief built from one detector
# probability and eight localiser probabilities: undamaged plus the eight
# single-bit states, bit i-1 for localiser label i.
SINGLE_FAILURE_DECIMALS = (1, 2, 4, 8, 16, 32, 64, 128)

_BELIEF_SUM_TOL = 1e-9


class GaussianNoveltyDetector(BaseEstimator):
    """Detects departure from the healthy strain population.

    Fitting runs principal component analysis on healthy-condition strain
    vectors and models the first score as a Gaussian.  A new measurement
    inside the ``band_sigmas`` band is assigned the fixed probability
    ``confidence_inside`` of being undamaged; outside the band the
    probability is the two-sided tail mass, which decays towards zero as
    the score leaves the band.

    Parameters
    ----------
    n_components : int
        Number of principal directions to retain.  Only the first drives
        classification; the rest are kept for inspection and plotting.
    confidence_inside : float
        Probability of "undamaged" reported anywhere inside the band.
    band_sigmas : float
        Half-width of the acceptance band in standard deviations.
    """

    def __init__(self, n_components=2, confidence_inside=0.997, band_sigmas=3.0):
        self.n_components = n_components
        self.confidence_inside = confidence_inside
        self.band_sigmas = band_sigmas

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        if not 0.0 < self.confidence_inside < 1.0:
            raise ValueError("confidence_inside must lie strictly inside (0, 1)")
        if self.band_sigmas <= 0:
            raise ValueError("band_sigmas must be positive")
        if not 1 <= self.n_components <= X.shape[1]:
            raise ValueError(
                f"n_components must lie in [1, {X.shape[1]}], got {self.n_components}"
            )
        if X.shape[0] < 2:
            raise ValueError("need at least two samples to estimate a spread")
        self.mean_ = X.mean(axis=0)
        centered = X - self.mean_
        _, singular_values, rows = np.linalg.svd(centered, full_matrices=False)
        components = rows[: self.n_components]
        # deterministic orientation: largest-magnitude coordinate positive
        for row in components:
            anchor = np.argmax(np.abs(row))
            if row[anchor] < 0:
                row *= -1.0
        self.components_ = components
        self.singular_values_ = singular_values[: self.n_components]
        scores = centered @ components[0]
        self.mu_ = float(scores.mean())
        sigma = float(scores.std(ddof=1))
        # scale-relative floor: identical rows can leave rounding residue
        # after centering, which is still zero variance for our purposes
        floor = 1e-12 * max(1.0, float(np.max(np.abs(X))))
        if not math.isfinite(sigma) or sigma <= floor:
            raise ValueError(
                "healthy training scores have zero variance; the detector "
                "cannot calibrate a band from identical samples"
            )
        self.sigma_ = sigma
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        """Project measurements onto the retained principal directions."""
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=float)
        return (X - self.mean_) @ self.components_.T

    def probability_undamaged(self, X):
        """Per-sample probability that the structure is undamaged."""
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=float)
        scores = (X - self.mean_) @ self.components_[0]
        z = np.abs(scores - self.mu_) / self.sigma_
        out = np.empty(z.shape, dtype=float)
        inside = z <= self.band_sigmas
        out[inside] = self.confidence_inside
        # two-sided Gaussian tail mass beyond the observed |z|
        out[~inside] = [math.erfc(v / math.sqrt(2.0)) for v in z[~inside]]
        return out

    def predict(self, X):
        """Boolean per sample: True when the score stays inside the band."""
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=float)
        scores = (X - self.mean_) @ self.components_[0]
        return np.abs(scores - self.mu_) / self.sigma_ <= self.band_sigmas

    def save(self, path):
        check_is_fitted(self, "components_")
        payload = {
            "kind": "novelty-detector",
            "params": {
                "n_components": int(self.n_components),
                "confidence_inside": float(self.confidence_inside),
                "band_sigmas": float(self.band_sigmas),
            },
            "mean": self.mean_.tolist(),
            "components": self.components_.tolist(),
            "singular_values": self.singular_values_.tolist(),
            "mu": self.mu_,
            "sigma": self.sigma_,
            "n_features_in": int(self.n_features_in_),
        }
        _write_json(path, payload)

    @classmethod
    def load(cls, path):
        payload = _read_json(path, expected_kind="novelty-detector")
        detector = cls(**payload["params"])
        detector.mean_ = np.asarray(payload["mean"], dtype=float)
        detector.components_ = np.asarray(payload["components"], dtype=float)
        detector.singular_values_ = np.asarray(payload["singular_values"], dtype=float)
        detector.mu_ = float(payload["mu"])
        detector.sigma_ = float(payload["sigma"])
        detector.n_features_in_ = int(payload["n_features_in"])
        return detector


def novelty_probability(detector: GaussianNoveltyDetector, nu) -> float:
    """Probability that a single measurement comes from the healthy state."""
    return float(detector.probability_undamaged(np.asarray(nu, dtype=float)[None, :])[0])


class MlpLocaliser(BaseEstimator, ClassifierMixin):
    """Feed-forward localiser mapping strains to a failed-member label.

    Hidden layers use tanh, the output layer a softmax over the eight
    member slots.  Features are standardized with training-set statistics.
    Training minimizes full-batch mean cross-entropy; when a validation
    set is supplied, the weights achieving the best validation accuracy
    anywhere along the trajectory are the ones kept.

    Parameters
    ----------
    hidden_sizes : tuple of int
        Widths of the tanh layers between input and the softmax head.
    optimizer : str
        "scg" for scaled conjugate gradients, "gd" for gradient descent
        with momentum.
    max_iter, tol : int, float
        Iteration budget and gradient norm stopping threshold.
    learning_rate, momentum : float
        Only consulted by the "gd" optimizer.
    random_state : int
        Seed for weight initialization; fixing it makes training runs
        bit-for-bit repeatable.
    """

    N_OUTPUTS = 8

    def __init__(
        self,
        hidden_sizes=(12, 12, 8),
        optimizer="scg",
        max_iter=500,
        tol=1e-8,
        learning_rate=0.05,
        momentum=0.9,
        random_state=0,
    ):
        self.hidden_sizes = hidden_sizes
        self.optimizer = optimizer
        self.max_iter = max_iter
        self.tol = tol
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.random_state = random_state

    # -- parameter vector layout -------------------------------------

    def _layer_shapes(self, n_features):
        sizes = [n_features, *self.hidden_sizes, self.N_OUTPUTS]
        return [(sizes[i], sizes[i + 1]) for i in range(len(sizes) - 1)]

    def _init_flat(self, n_features, rng):
        chunks = []
        for fan_in, fan_out in self._layer_shapes(n_features):
            bound = 1.0 / math.sqrt(fan_in)
            chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out))
            chunks.append(rng.uniform(-bound, bound, size=fan_out))
        return np.concatenate(chunks)

    def _unflatten(self, theta, n_features):
        weights, biases = [], []
        offset = 0
        for fan_in, fan_out in self._layer_shapes(n_features):
            weights.append(theta[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out))
            offset += fan_in * fan_out
            biases.append(theta[offset : offset + fan_out])
            offset += fan_out
        return weights, biases

    # -- network mathematics -----------------------------------------

    @staticmethod
    def _forward(X_std, weights, biases):
        """Activations per layer plus stable softmax probabilities."""
        activations = [X_std]
        for W, b in zip(weights[:-1], biases[:-1]):
            activations.append(np.tanh(activations[-1] @ W + b))
        logits = activations[-1] @ weights[-1] + biases[-1]
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probabilities = exp / exp.sum(axis=1, keepdims=True)
        return activations, logits, probabilities

    def _loss_and_grad(self, theta, X_std, Y):
        weights, biases = self._unflatten(theta, X_std.shape[1])
        activations, logits, probabilities = self._forward(X_std, weights, biases)
        n = X_std.shape[0]
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1))
        loss = float(np.mean(log_norm - shifted[Y.astype(bool)]))

        grads = []
        delta = (probabilities - Y) / n
        for layer in range(len(weights) - 1, -1, -1):
            grads.append(np.concatenate(
                [(activations[layer].T @ delta).ravel(), delta.sum(axis=0)]
            ))
            if layer > 0:
                delta = (delta @ weights[layer].T) * (1.0 - activations[layer] ** 2)
        return loss, np.concatenate(grads[::-1])

    # -- estimator API -------------------------------------------------

    def fit(self, X, y, validation=None):
        """Train the localiser; ``validation`` is an optional (X, y) pair."""
        X, y = check_X_y(X, y, dtype=float)
        y = np.asarray(y, dtype=int)
        if np.any(y < 1) or np.any(y > self.N_OUTPUTS):
            raise ValueError(f"labels must lie in 1..{self.N_OUTPUTS}")
        if self.optimizer not in ("scg", "gd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

        self.classes_ = np.arange(1, self.N_OUTPUTS + 1)
        self.n_features_in_ = X.shape[1]
        self.feature_mean_ = X.mean(axis=0)
        std = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
        # constant channels carry no signal; unit scale keeps them finite
        self.feature_std_ = np.where(std > 0, std, 1.0)

        X_std = (X - self.feature_mean_) / self.feature_std_
        Y = np.zeros((X.shape[0], self.N_OUTPUTS))
        Y[np.arange(X.shape[0]), y - 1] = 1.0

        rng = np.random.default_rng(self.random_state)
        theta0 = self._init_flat(X.shape[1], rng)

        tracker = None
        callback = None
        if validation is not None:
            X_valid, y_valid = validation
            X_valid = check_array(np.asarray(X_valid, dtype=float))
            y_valid = np.asarray(y_valid, dtype=int)
            X_valid_std = (X_valid - self.feature_mean_) / self.feature_std_
            tracker = _BestOnValidation(self, X_valid_std, y_valid)
            tracker.consider(theta0)
            callback = lambda w, f: tracker.consider(w)

        objective = lambda theta: self._loss_and_grad(theta, X_std, Y)
        try:
            if self.optimizer == "scg":
                result = minimize_scg(
                    objective, theta0, max_iter=self.max_iter,
                    grad_tol=self.tol, callback=callback,
                )
            else:
                result = minimize_gd(
                    objective, theta0, max_iter=self.max_iter,
                    grad_tol=self.tol, learning_rate=self.learning_rate,
                    momentum=self.momentum, callback=callback,
                )
        except OptimizationError as exc:
            raise OptimizationError(
                f"localiser training aborted ({self.optimizer}, "
                f"seed {self.random_state}): {exc}"
            ) from exc

        chosen = tracker.best_theta if tracker is not None else result.x
        self.weights_, self.biases_ = self._unflatten(chosen.copy(), X.shape[1])
        self.loss_history_ = result.history
        self.n_iter_ = result.n_iter
        self.validation_accuracy_ = tracker.best_accuracy if tracker else None
        return self

    def _proba_std(self, theta_or_weights, X_std):
        weights, biases = theta_or_weights
        return self._forward(X_std, weights, biases)[2]

    def predict_proba(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X, dtype=float)
        X_std = (X - self.feature_mean_) / self.feature_std_
        return self._forward(X_std, self.weights_, self.biases_)[2]

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def save(self, path):
        check_is_fitted(self, "weights_")
        payload = {
            "kind": "mlp-localiser",
            "params": {
                "hidden_sizes": [int(h) for h in self.hidden_sizes],
                "optimizer": self.optimizer,
                "max_iter": int(self.max_iter),
                "tol": float(self.tol),
                "learning_rate": float(self.learning_rate),
                "momentum": float(self.momentum),
                "random_state": int(self.random_state),
            },
            "feature_mean": self.feature_mean_.tolist(),
            "feature_std": self.feature_std_.tolist(),
            "weights": [w.tolist() for w in self.weights_],
            "biases": [b.tolist() for b in self.biases_],
            "n_features_in": int(self.n_features_in_),
        }
        _write_json(path, payload)

    @classmethod
    def load(cls, path):
        payload = _read_json(path, expected_kind="mlp-localiser")
        params = dict(payload["params"])
        params["hidden_sizes"] = tuple(params["hidden_sizes"])
        model = cls(**params)
        model.classes_ = np.arange(1, cls.N_OUTPUTS + 1)
        model.feature_mean_ = np.asarray(payload["feature_mean"], dtype=float)
        model.feature_std_ = np.asarray(payload["feature_std"], dtype=float)
        model.weights_ = [np.asarray(w, dtype=float) for w in payload["weights"]]
        model.biases_ = [np.asarray(b, dtype=float) for b in payload["biases"]]
        model.n_features_in_ = int(payload["n_features_in"])
        return model


class _BestOnValidation:
    """Keeps the strictly best validation-accuracy weights seen so far."""

    def __init__(self, model, X_valid_std, y_valid):
        self._model = model
        self._X = X_valid_std
        self._y = y_valid
        self.best_accuracy = -1.0
        self.best_theta = None

    def consider(self, theta):
        weights, biases = self._model._unflatten(theta, self._X.shape[1])
        probabilities = MlpLocaliser._forward(self._X, weights, biases)[2]
        predicted = np.argmax(probabilities, axis=1) + 1
        accuracy = float(np.mean(predicted == self._y))
        if accuracy > self.best_accuracy:
            self.best_accuracy = accuracy
            self.best_theta = theta.copy()


def fuse_belief(p_undamaged: float, localiser_probabilities) -> np.ndarray:
    """Combine detector and localiser outputs into a 256-state belief.

    The undamaged state receives ``p_undamaged`` exactly; single-failure
    state ``2**(i-1)`` receives the complement weighted by the localiser's
    probability for label ``i``.  All other states get zero.
    """
    p0 = float(p_undamaged)
    if not 0.0 <= p0 <= 1.0:
        raise ValueError(f"undamaged probability must lie in [0, 1], got {p0}")
    loc = np.asarray(localiser_probabilities, dtype=float)
    if loc.shape != (len(SINGLE_FAILURE_DECIMALS),):
        raise ValueError(
            f"expected {len(SINGLE_FAILURE_DECIMALS)} localiser probabilities, "
            f"got shape {loc.shape}"
        )
    if np.any(loc < 0):
        raise ValueError("localiser probabilities must be nonnegative")
    if abs(loc.sum() - 1.0) > _BELIEF_SUM_TOL:
        raise ValueError(
            f"localiser probabilities must sum to 1, got {loc.sum()!r}"
        )
    belief = np.zeros(2 ** len(SINGLE_FAILURE_DECIMALS))
    belief[0] = p0
    belief[list(SINGLE_FAILURE_DECIMALS)] = (1.0 - p0) * loc
    return belief


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=1)
        handle.write("\n")


def _read_json(path, expected_kind):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    kind = payload.get("kind")
    if kind != expected_kind:
        raise ValueError(f"file {path!r} holds a {kind!r}, expected {expected_kind!r}")
    return payload


def load_model(path):
    """Load either saved model type by inspecting its kind tag."""
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    kind = payload.get("kind")
    if kind == "novelty-detector":
        return GaussianNoveltyDetector.load(path)
    if kind == "mlp-localiser":
        return MlpLocaliser.load(path)
    raise ValueError(f"unrecognized model kind {kind!r} in {path!r}")
