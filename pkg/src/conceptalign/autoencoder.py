"""Layer-wise trained stacked de-noising auto-encoders.

Each layer is a sigmoid encoder/decoder pair with untied weights, trained by
full-batch gradient descent on the mean squared reconstruction error of the
clean input from an encoding of its masked (corrupted) copy.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_matrix
from .exceptions import DataError, DimensionMismatch, NonFiniteLoss

HIDDEN_FRACTIONS = (Fraction(1), Fraction(2, 3), Fraction(1, 2), Fraction(1, 5))
LEARNING_RATES = (1e-3, 1e-2, 1e-1, 1.0)
CORRUPTIONS = (0.0, 0.3, 0.5)

MODEL_TAG = b"SDAEMODL"
MODEL_VERSION = 1


def sigmoid(a):
    return expit(a)


def lr_schedule(t, epsilon0, tau):
    """Learning rate at iteration ``t``: constant until ``tau``, then ~1/t."""
    if t < 1 or tau < 1 or epsilon0 <= 0:
        raise ValueError("need t >= 1, tau >= 1 and epsilon0 > 0")
    return epsilon0 * (tau / max(t, tau))


def shrink(size, fraction):
    """Floor of ``size * fraction`` computed exactly (2/3 of 75 is 50)."""
    return int(Fraction(size) * Fraction(fraction))


def chain_sizes(n_input, depth, fraction=Fraction(2, 3)):
    sizes = [n_input]
    for _ in range(depth):
        sizes.append(shrink(sizes[-1], fraction))
    return sizes


@dataclass(frozen=True)
class DaeConfig:
    hidden_size: int
    epsilon0: float = 1.0
    tau: int = 20
    corruption: float = 0.3
    max_iters: int = 500
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        if self.epsilon0 <= 0:
            raise ValueError("epsilon0 must be > 0")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if not 0 <= self.corruption < 1:
            raise ValueError("corruption must lie in [0, 1)")
        if self.max_iters < 0 or self.patience < 1:
            raise ValueError("max_iters must be >= 0 and patience >= 1")


@dataclass(frozen=True, eq=False)
class DaeLayer:
    W_enc: np.ndarray  # (hidden, visible)
    b_enc: np.ndarray  # (hidden,)
    W_dec: np.ndarray  # (visible, hidden)
    b_dec: np.ndarray  # (visible,)

    def __post_init__(self):
        h, v = self.W_enc.shape
        if self.b_enc.shape != (h,) or self.W_dec.shape != (v, h) \
                or self.b_dec.shape != (v,):
            raise DimensionMismatch("inconsistent layer parameter shapes")

    @property
    def n_visible(self):
        return self.W_enc.shape[1]

    @property
    def n_hidden(self):
        return self.W_enc.shape[0]

    def encode(self, X):
        return sigmoid(X @ self.W_enc.T + self.b_enc)

    def decode(self, H):
        return sigmoid(H @ self.W_dec.T + self.b_dec)

    def reconstruct(self, X):
        return self.decode(self.encode(X))

    def params(self):
        return self.W_enc, self.b_enc, self.W_dec, self.b_dec

    @classmethod
    def zeros(cls, n_visible, n_hidden):
        return cls(np.zeros((n_hidden, n_visible)), np.zeros(n_hidden),
                   np.zeros((n_visible, n_hidden)), np.zeros(n_visible))


@dataclass(frozen=True, eq=False)
class SdaeModel:
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("a stacked model needs at least one layer")
        for lower, upper in zip(self.layers, self.layers[1:]):
            if lower.n_hidden != upper.n_visible:
                raise DimensionMismatch("layer sizes do not chain")

    @property
    def layer_sizes(self):
        return [self.layers[0].n_visible] + [l.n_hidden for l in self.layers]

    @property
    def depth(self):
        return len(self.layers)

    def truncate(self, depth):
        return SdaeModel(self.layers[:depth])


@dataclass(frozen=True, eq=False)
class RepresentationMatrix:
    continuous: np.ndarray
    binary: np.ndarray
    labels: np.ndarray


def init_layer(n_visible, n_hidden, rng):
    """Uniform weights in +-1/sqrt(fan_in), zero biases."""
    r_enc = 1.0 / np.sqrt(n_visible)
    r_dec = 1.0 / np.sqrt(n_hidden)
    return DaeLayer(
        rng.uniform(-r_enc, r_enc, (n_hidden, n_visible)),
        np.zeros(n_hidden),
        rng.uniform(-r_dec, r_dec, (n_visible, n_hidden)),
        np.zeros(n_visible),
    )


def loss_and_gradients(layer, X_in, X_target):
    """Mean squared reconstruction error and its parameter gradients.

    ``X_in`` is the (possibly corrupted) encoder input, ``X_target`` the
    clean data the decoder must reproduce.
    """
    n = X_in.shape[0]
    H = layer.encode(X_in)
    Z = layer.decode(H)
    diff = Z - X_target
    loss = np.sum(diff * diff) / n
    dZ = (2.0 / n) * diff * Z * (1.0 - Z)
    gW_dec = dZ.T @ H
    gb_dec = dZ.sum(axis=0)
    dH = (dZ @ layer.W_dec) * H * (1.0 - H)
    gW_enc = dH.T @ X_in
    gb_enc = dH.sum(axis=0)
    return loss, (gW_enc, gb_enc, gW_dec, gb_dec)


def reconstruction_error(layer, data):
    """Mean over samples of the squared Euclidean reconstruction error."""
    X = check_matrix(data, "data", n_features=layer.n_visible)
    diff = layer.reconstruct(X) - X
    return float(np.sum(diff * diff) / X.shape[0])


def _seed_streams(seed):
    init_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(noise_ss)


def fit_layer(data, config, init=None, force_mask=False):
    """Train one de-noising layer; returns ``(layer, loss_history)``.

    ``loss_history[t-1]`` is the training loss evaluated before update ``t``.
    ``force_mask`` draws masks even at zero corruption (for testing that the
    bypass does not change the trajectory).
    """
    X = check_matrix(data, "data")
    init_rng, noise_rng = _seed_streams(config.seed)
    layer = init if init is not None else init_layer(
        X.shape[1], config.hidden_size, init_rng)
    if layer.n_visible != X.shape[1]:
        raise DimensionMismatch(
            f"data has {X.shape[1]} columns, layer expects {layer.n_visible}")
    W_enc, b_enc, W_dec, b_dec = (p.copy() for p in layer.params())
    keep = 1.0 - config.corruption
    history = []
    best = np.inf
    stale = 0
    for t in range(1, config.max_iters + 1):
        if config.corruption > 0 or force_mask:
            X_in = X * (noise_rng.random(X.shape) < keep)
        else:
            X_in = X
        current = DaeLayer(W_enc, b_enc, W_dec, b_dec)
        loss, grads = loss_and_gradients(current, X_in, X)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"loss became {loss} at iteration {t}")
        history.append(loss)
        if loss < best:
            best, stale = loss, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
        lr = lr_schedule(t, config.epsilon0, config.tau)
        W_enc -= lr * grads[0]
        b_enc -= lr * grads[1]
        W_dec -= lr * grads[2]
        b_dec -= lr * grads[3]
    final = DaeLayer(W_enc, b_enc, W_dec, b_dec)
    if not all(np.all(np.isfinite(p)) for p in final.params()):
        raise NonFiniteLoss("parameters became non-finite")
    return final, history


def train_dae(data, config, init=None):
    """Train a single de-noising auto-encoder layer."""
    return fit_layer(data, config, init=init)[0]


def train_sdae(data, layer_configs):
    """Train layers bottom-up, each on the clean activations of the one below."""
    if not layer_configs:
        raise ValueError("at least one layer config is required")
    X = data.X if hasattr(data, "X") else check_matrix(data, "data")
    layers = []
    for k, config in enumerate(layer_configs, 1):
        try:
            layer = train_dae(X, config)
        except NonFiniteLoss as exc:
            raise NonFiniteLoss(str(exc), layer=k) from exc
        layers.append(layer)
        X = layer.encode(X)
    return SdaeModel(layers)


def encode(model, data):
    """Forward pass through every encoder; activations lie in (0, 1)."""
    X = check_matrix(data, "data")
    if X.shape[1] != model.layers[0].n_visible:
        raise DimensionMismatch(
            f"data has {X.shape[1]} columns, model expects "
            f"{model.layers[0].n_visible}")
    for layer in model.layers:
        X = layer.encode(X)
    return X


def binarize(activations):
    """Step function: 1 where the activation is at least 0.5."""
    return (np.asarray(activations) >= 0.5).astype(np.float64)


def represent(model, data, labels=None):
    continuous = encode(model, data)
    return RepresentationMatrix(continuous, binarize(continuous),
                                None if labels is None else np.asarray(labels))


def select_config(data, candidates, seed=0, validation_fraction=0.2):
    """Pick the candidate with the lowest held-out reconstruction error.

    Ties go to the smaller hidden size, then learning rate, then corruption;
    exact duplicates resolve to the earliest candidate.
    """
    X = check_matrix(data, "data")
    if not candidates:
        raise ValueError("no candidate configurations")
    rng = np.random.default_rng(seed)
    order = rng.permutation(X.shape[0])
    n_val = max(1, int(round(validation_fraction * X.shape[0])))
    if n_val >= X.shape[0]:
        train, val = X, X
    else:
        train, val = X[order[n_val:]], X[order[:n_val]]
    ranked = sorted(candidates,
                    key=lambda c: (c.hidden_size, c.epsilon0, c.corruption))
    best, best_err = None, np.inf
    for config in ranked:
        try:
            err = reconstruction_error(train_dae(train, config), val)
        except NonFiniteLoss:
            continue
        if err < best_err:
            best, best_err = config, err
    if best is None:
        raise NonFiniteLoss("every grid candidate diverged")
    return best


def grid_search_layer(data, hidden_choices=HIDDEN_FRACTIONS,
                      lr_choices=LEARNING_RATES,
                      corruption_choices=CORRUPTIONS, *, tau=20,
                      max_iters=500, patience=20, seed=0):
    """Grid search one layer's size, learning rate and corruption level.

    ``hidden_choices`` are fractions of the input width (floored).
    """
    X = check_matrix(data, "data")
    sizes = sorted({max(1, shrink(X.shape[1], f)) for f in hidden_choices})
    candidates = [
        DaeConfig(h, lr, tau, c, max_iters, patience, seed)
        for h, lr, c in product(sizes, lr_choices, corruption_choices)
    ]
    return select_config(X, candidates, seed=seed)


# --------------------------------------------------------------------------
# serialization


def save_model(model, path):
    """Write a versioned little-endian flat binary; round-trips bit-exactly."""
    sizes = model.layer_sizes
    with open(path, "wb") as f:
        f.write(MODEL_TAG)
        f.write(struct.pack("<II", MODEL_VERSION, model.depth))
        f.write(struct.pack(f"<{len(sizes)}I", *sizes))
        for layer in model.layers:
            for block in layer.params():
                f.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def load_model(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:len(MODEL_TAG)] != MODEL_TAG:
        raise DataError(f"{path}: not a stacked auto-encoder model file")
    offset = len(MODEL_TAG)
    version, depth = struct.unpack_from("<II", raw, offset)
    if version != MODEL_VERSION:
        raise DataError(f"{path}: unsupported model version {version}")
    offset += 8
    sizes = struct.unpack_from(f"<{depth + 1}I", raw, offset)
    offset += 4 * (depth + 1)
    layers = []
    for v, h in zip(sizes, sizes[1:]):
        blocks = []
        for shape in ((h, v), (h,), (v, h), (v,)):
            count = int(np.prod(shape))
            if offset + 8 * count > len(raw):
                raise DataError(f"{path}: truncated model file")
            blocks.append(np.frombuffer(raw, "<f8", count, offset)
                          .reshape(shape).astype(np.float64))
            offset += 8 * count
        layers.append(DaeLayer(*blocks))
    return SdaeModel(layers)


# --------------------------------------------------------------------------
# estimators


class DenoisingAutoencoder(TransformerMixin, BaseEstimator):
    """Single de-noising auto-encoder layer as a scikit-learn transformer.

    Parameters
    ----------
    n_hidden : int
        Number of hidden sigmoid units.
    learning_rate : float, default=1.0
        Initial learning rate, held until iteration ``tau`` then decayed as 1/t.
    tau : int, default=20
    corruption : float, default=0.3
        Probability of zeroing each input component during training.
    max_iter : int, default=500
    patience : int, default=20
        Stop after this many iterations without a new best training loss.
    random_state : int, default=0

    Attributes
    ----------
    layer_ : DaeLayer
    loss_curve_ : list of float
    n_iter_ : int
    """

    def __init__(self, n_hidden=100, learning_rate=1.0, tau=20, corruption=0.3,
                 max_iter=500, patience=20, random_state=0):
        self.n_hidden = n_hidden
        self.learning_rate = learning_rate
        self.tau = tau
        self.corruption = corruption
        self.max_iter = max_iter
        self.patience = patience
        self.random_state = random_state

    def _config(self):
        return DaeConfig(self.n_hidden, self.learning_rate, self.tau,
                         self.corruption, self.max_iter, self.patience,
                         self.random_state)

    def fit(self, X, y=None):
        X = check_matrix(X)
        self.layer_, self.loss_curve_ = fit_layer(X, self._config())
        self.n_iter_ = len(self.loss_curve_)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "layer_")
        return self.layer_.encode(check_matrix(X, n_features=self.n_features_in_))

    def inverse_transform(self, H):
        check_is_fitted(self, "layer_")
        return self.layer_.decode(check_matrix(H, n_features=self.n_hidden))

    def score(self, X, y=None):
        """Negative reconstruction error (higher is better)."""
        check_is_fitted(self, "layer_")
        return -reconstruction_error(self.layer_, X)


class StackedDenoisingAutoencoder(TransformerMixin, BaseEstimator):
    """Greedy layer-wise stack of de-noising auto-encoders.

    Parameters
    ----------
    depth : int, default=5
        Number of stacked layers (ignored when ``hidden_layer_sizes`` is set).
    hidden_layer_sizes : sequence of int, optional
        Explicit sizes; by default each layer keeps ``size_fraction`` of the
        layer below (floored).
    size_fraction : Fraction, default=2/3
    learning_rate, tau, corruption, max_iter, patience
        Per-layer training settings, see :class:`DenoisingAutoencoder`.
    grid_search : bool, default=False
        Choose every layer's size, learning rate and corruption by grid search
        on held-out reconstruction error instead of the fixed settings.
    binary_output : bool, default=False
        Make :meth:`transform` return step-function codes.
    random_state : int, default=0
    """

    def __init__(self, depth=5, hidden_layer_sizes=None,
                 size_fraction=Fraction(2, 3), learning_rate=1.0, tau=20,
                 corruption=0.3, max_iter=500, patience=20, grid_search=False,
                 binary_output=False, random_state=0):
        self.depth = depth
        self.hidden_layer_sizes = hidden_layer_sizes
        self.size_fraction = size_fraction
        self.learning_rate = learning_rate
        self.tau = tau
        self.corruption = corruption
        self.max_iter = max_iter
        self.patience = patience
        self.grid_search = grid_search
        self.binary_output = binary_output
        self.random_state = random_state

    def layer_configs(self, n_features):
        """Fixed per-layer configurations (used when not grid searching)."""
        if self.hidden_layer_sizes is not None:
            sizes = list(self.hidden_layer_sizes)
        else:
            sizes = chain_sizes(n_features, self.depth, self.size_fraction)[1:]
        seeds = layer_seeds(self.random_state, len(sizes))
        return [DaeConfig(h, self.learning_rate, self.tau, self.corruption,
                          self.max_iter, self.patience, s)
                for h, s in zip(sizes, seeds)]

    def fit(self, X, y=None):
        X = check_matrix(X)
        self.n_features_in_ = X.shape[1]
        if self.grid_search:
            depth = (len(self.hidden_layer_sizes)
                     if self.hidden_layer_sizes is not None else self.depth)
            self.model_, self.configs_ = grid_search_stack(
                X, depth, tau=self.tau, max_iters=self.max_iter,
                patience=self.patience, seed=self.random_state)
        else:
            self.configs_ = self.layer_configs(X.shape[1])
            self.model_ = train_sdae(X, self.configs_)
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        H = encode(self.model_, check_matrix(X, n_features=self.n_features_in_))
        return binarize(H) if self.binary_output else H


def layer_seeds(seed, depth):
    return [int(s) for s in
            np.random.SeedSequence(seed).generate_state(depth, dtype=np.uint32)]


def grid_search_stack(data, depth, *, tau=20, max_iters=500, patience=20,
                      seed=0):
    """Grid search and train each layer in turn; returns (model, configs)."""
    X = check_matrix(data, "data")
    layers, configs = [], []
    for k, s in enumerate(layer_seeds(seed, depth), 1):
        config = grid_search_layer(X, tau=tau, max_iters=max_iters,
                                   patience=patience, seed=s)
        try:
            layer = train_dae(X, config)
        except NonFiniteLoss as exc:
            raise NonFiniteLoss(str(exc), layer=k) from exc
        layers.append(layer)
        configs.append(config)
        X = layer.encode(X)
    return SdaeModel(layers), configs

