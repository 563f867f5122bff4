"""Minimal dense feed-forward network engine.

Implements exactly what the patch enhancer needs: sigmoid/identity dense
layers, the two training losses (the sparsity-regularized denoising loss for
single encoder/decoder pairs and the plain finetuning loss for the unrolled
stack), their analytic gradients, and deterministic mini-batch SGD with a
staged learning-rate schedule and a validation stopping rule.

All math is float64. Batches are numpy arrays of shape (n, dim); single
vectors of shape (dim,) are accepted wherever a batch is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import child_key, make_rng, permutation

# outputs of the sigmoid are clamped this far away from {0, 1} so that
# downstream logs and divisions stay finite
SIGMOID_EPS = 1e-12

# batch-mean activations are clamped into [RHO_CLAMP, 1 - RHO_CLAMP] before
# the KL sparsity term; a numerical guard, not part of the loss definition
RHO_CLAMP = 1e-6

ACTIVATIONS = ("sigmoid", "identity")

TAG_SGD = 11
TAG_INIT = 12


class TrainingDiverged(RuntimeError):
    """Raised when a training loss stops being finite."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Logistic function with outputs clamped strictly inside (0, 1)."""
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=np.float64)))
    return np.clip(out, SIGMOID_EPS, 1.0 - SIGMOID_EPS, out=out)


def _apply_activation(name, z):
    if name == "sigmoid":
        return sigmoid(z)
    return np.asarray(z, dtype=np.float64)


def _activation_deriv(name, a):
    # derivative expressed through the activation output
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(a)


@dataclass
class DenseLayer:
    """One dense layer: weights (out_dim, in_dim), biases (out_dim,)."""

    weights: np.ndarray
    biases: np.ndarray
    activation: str = "sigmoid"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError("weights must be a 2-D matrix")
        if self.biases.shape != (self.weights.shape[0],):
            raise ValueError(
                f"bias length {self.biases.shape} does not match "
                f"weight rows {self.weights.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.biases).all()):
            raise ValueError("layer parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Activation(W x + b) for a single vector or a batch."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ValueError(
                f"input dim {x.shape[-1]} does not match layer in_dim {self.in_dim}"
            )
        return _apply_activation(self.activation, x @ self.weights.T + self.biases)

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.biases.copy(), self.activation)


@dataclass
class Network:
    """Ordered stack of dense layers with compatible dimensions."""

    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for k in range(len(self.layers) - 1):
            if self.layers[k].out_dim != self.layers[k + 1].in_dim:
                raise ValueError(
                    f"layer {k} out_dim {self.layers[k].out_dim} does not match "
                    f"layer {k + 1} in_dim {self.layers[k + 1].in_dim}"
                )

    @property
    def dims(self) -> tuple:
        """Dimension chain (input dim, then every layer's out_dim)."""
        return (self.layers[0].in_dim,) + tuple(l.out_dim for l in self.layers)

    def forward(self, x: np.ndarray) -> list:
        """Per-layer activations for a vector or batch, output last."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = x[None, :] if single else x
        acts = []
        for k, layer in enumerate(self.layers):
            if a.shape[1] != layer.in_dim:
                raise ValueError(
                    f"layer {k}: expected input dim {layer.in_dim}, got {a.shape[1]}"
                )
            a = layer.apply(a)
            acts.append(a[0] if single else a)
        return acts

    def output(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[-1]

    def copy(self) -> "Network":
        return Network([l.copy() for l in self.layers])


@dataclass
class LossConfig:
    """Hyper-parameters of the denoising-autoencoder loss.

    lam is the weight-decay coefficient, beta weights the KL sparsity term,
    rho is the target mean activation of hidden units.
    """

    lam: float = 1e-4
    beta: float = 0.1
    rho: float = 0.05

    def __post_init__(self):
        if self.lam < 0 or self.beta < 0:
            raise ValueError("lam and beta must be nonnegative")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie strictly inside (0, 1)")


@dataclass
class SgdSchedule:
    """Staged SGD schedule.

    stages is a list of (epoch_count, learning_rate); epoch_count None marks
    an open-ended stage that runs until the relative improvement of the
    validation loss between consecutive epochs drops below
    stop_rel_improvement. Only the last stage may be open-ended. max_epochs
    caps the total epoch count (None = unlimited). validation_loss selects
    what the stopping rule watches: "full" (loss including regularizers) or
    "reconstruction" (data term only).
    """

    stages: list = field(default_factory=lambda: [(30, 0.1)])
    batch_size: int = 100
    stop_rel_improvement: float = 0.005
    max_epochs: int | None = None
    validation_loss: str = "full"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.validation_loss not in ("full", "reconstruction"):
            raise ValueError("validation_loss must be 'full' or 'reconstruction'")
        for i, (count, lr) in enumerate(self.stages):
            if lr < 0:
                raise ValueError("learning rates must be nonnegative")
            if count is None and i != len(self.stages) - 1:
                raise ValueError("only the last stage may be open-ended")
            if count is not None and count < 0:
                raise ValueError("stage epoch counts must be nonnegative")


@dataclass
class EpochStats:
    epoch: int
    learning_rate: float
    train_loss: float
    valid_loss: float


def kl_divergence(rho_hat: float, rho: float) -> float:
    """KL divergence between Bernoulli means, rho the target activation.

    rho * log(rho / rho_hat) + (1 - rho) * log((1 - rho) / (1 - rho_hat)).
    Both arguments must lie strictly inside (0, 1); clamping is the caller's
    job.
    """
    if not 0.0 < rho_hat < 1.0:
        raise ValueError(f"rho_hat {rho_hat} outside (0, 1)")
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho {rho} outside (0, 1)")
    return rho * math.log(rho / rho_hat) + (1.0 - rho) * math.log(
        (1.0 - rho) / (1.0 - rho_hat)
    )


def _kl_vector(rho_hat, rho):
    # rho_hat already clamped into (0, 1)
    return rho * np.log(rho / rho_hat) + (1.0 - rho) * np.log(
        (1.0 - rho) / (1.0 - rho_hat)
    )


def _as_batch(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[0] == 0:
        raise ValueError("batch must be a nonempty (n, dim) array")
    return a


def _check_pair(clean, corrupted):
    y = _as_batch(clean)
    x = _as_batch(corrupted)
    if y.shape[0] != x.shape[0]:
        raise ValueError(
            f"clean batch has {y.shape[0]} rows, corrupted has {x.shape[0]}"
        )
    return y, x


def da_loss(batch_clean, batch_corrupted, encoder: DenseLayer, decoder: DenseLayer,
            cfg: LossConfig) -> float:
    """Sparsity-regularized denoising reconstruction loss of one DA.

    mean over the batch of half squared reconstruction error, plus
    beta * sum_j KL(rho_hat_j || rho) over hidden units (rho_hat_j is the
    batch-mean activation of unit j), plus (lam / 2) * (||W||_F^2 + ||W'||_F^2).
    """
    loss, _ = da_gradients(batch_clean, batch_corrupted, encoder, decoder, cfg,
                           need_grads=False)
    return loss


def da_gradients(batch_clean, batch_corrupted, encoder: DenseLayer,
                 decoder: DenseLayer, cfg: LossConfig, need_grads=True):
    """Loss and analytic gradients of da_loss.

    Returns (loss, [(dW_enc, db_enc), (dW_dec, db_dec)]); the gradient list
    is None when need_grads is False.
    """
    y, x = _check_pair(batch_clean, batch_corrupted)
    n = x.shape[0]
    h = encoder.apply(x)
    y_hat = decoder.apply(h)
    if y.shape[1] != y_hat.shape[1]:
        raise ValueError(
            f"clean dim {y.shape[1]} does not match decoder out_dim {y_hat.shape[1]}"
        )
    r = y_hat - y

    loss = 0.5 / n * float(np.sum(r * r))
    raw_mean = h.mean(axis=0)
    rho_hat = np.clip(raw_mean, RHO_CLAMP, 1.0 - RHO_CLAMP)
    if cfg.beta > 0:
        loss += cfg.beta * float(np.sum(_kl_vector(rho_hat, cfg.rho)))
    if cfg.lam > 0:
        loss += 0.5 * cfg.lam * (
            float(np.sum(encoder.weights ** 2)) + float(np.sum(decoder.weights ** 2))
        )
    if not need_grads:
        return loss, None

    delta_out = (r / n) * _activation_deriv(decoder.activation, y_hat)
    dw_dec = delta_out.T @ h + cfg.lam * decoder.weights
    db_dec = delta_out.sum(axis=0)

    back = delta_out @ decoder.weights
    if cfg.beta > 0:
        kl_grad = cfg.beta / n * (
            -(cfg.rho / rho_hat) + (1.0 - cfg.rho) / (1.0 - rho_hat)
        )
        # clamped units contribute no gradient
        kl_grad[(raw_mean < RHO_CLAMP) | (raw_mean > 1.0 - RHO_CLAMP)] = 0.0
        back = back + kl_grad[None, :]
    delta_hid = back * _activation_deriv(encoder.activation, h)
    dw_enc = delta_hid.T @ x + cfg.lam * encoder.weights
    db_enc = delta_hid.sum(axis=0)
    return loss, [(dw_enc, db_enc), (dw_dec, db_dec)]


def ssda_loss(batch_clean, batch_corrupted, net: Network, lam: float) -> float:
    """Finetuning loss of the unrolled stack.

    mean over the batch of the (not halved) squared reconstruction error,
    plus (lam / L) * sum of squared Frobenius norms over all 2L layers,
    L being the number of stacked DAs. No sparsity term.
    """
    loss, _ = ssda_gradients(batch_clean, batch_corrupted, net, lam,
                             need_grads=False)
    return loss


def ssda_gradients(batch_clean, batch_corrupted, net: Network, lam: float,
                   need_grads=True):
    """Loss and analytic gradients of ssda_loss.

    Returns (loss, [(dW, db) per layer]); gradients None when need_grads is
    False.
    """
    if len(net.layers) % 2 != 0:
        raise ValueError("finetuning loss expects an even layer count (2L layers)")
    y, x = _check_pair(batch_clean, batch_corrupted)
    n = x.shape[0]
    n_stacked = len(net.layers) // 2

    acts = net.forward(x)
    y_hat = acts[-1]
    if y.shape[1] != y_hat.shape[1]:
        raise ValueError(
            f"clean dim {y.shape[1]} does not match network out_dim {y_hat.shape[1]}"
        )
    r = y_hat - y
    # overflow to inf is the divergence signal handled by the trainer
    with np.errstate(over="ignore"):
        loss = float(np.sum(r * r)) / n
    if lam > 0:
        loss += lam / n_stacked * sum(
            float(np.sum(l.weights ** 2)) for l in net.layers
        )
    if not need_grads:
        return loss, None

    grads = [None] * len(net.layers)
    grad_a = 2.0 / n * r
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        delta = grad_a * _activation_deriv(layer.activation, acts[k])
        prev = x if k == 0 else acts[k - 1]
        dw = delta.T @ prev + (2.0 * lam / n_stacked) * layer.weights
        db = delta.sum(axis=0)
        grads[k] = (dw, db)
        if k > 0:
            grad_a = delta @ layer.weights
    return loss, grads


def glorot_uniform(out_dim: int, in_dim: int, rng) -> np.ndarray:
    """Uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    limit = math.sqrt(6.0 / (in_dim + out_dim))
    return (2.0 * rng.random((out_dim, in_dim)) - 1.0) * limit


def init_layer(in_dim: int, out_dim: int, rng, activation="sigmoid") -> DenseLayer:
    return DenseLayer(glorot_uniform(out_dim, in_dim, rng), np.zeros(out_dim),
                      activation)


def init_network(dims, seed, activations=None) -> Network:
    """Fresh network for a dimension chain, Glorot weights, zero biases."""
    if activations is None:
        activations = ["sigmoid"] * (len(dims) - 1)
    rng = make_rng(child_key(seed, TAG_INIT))
    layers = [
        init_layer(dims[k], dims[k + 1], rng, activations[k])
        for k in range(len(dims) - 1)
    ]
    return Network(layers)


def _full_loss(loss_kind, net, clean, corrupted, cfg):
    if loss_kind == "da":
        return da_loss(clean, corrupted, net.layers[0], net.layers[1], cfg)
    return ssda_loss(clean, corrupted, net, cfg.lam)


def _reconstruction_loss(loss_kind, net, clean, corrupted):
    y_hat = net.output(corrupted)
    r = y_hat - np.asarray(clean, dtype=np.float64)
    n = r.shape[0]
    if loss_kind == "da":
        return 0.5 / n * float(np.sum(r * r))
    return float(np.sum(r * r)) / n


def _batch_grads(loss_kind, net, clean, corrupted, cfg):
    if loss_kind == "da":
        return da_gradients(clean, corrupted, net.layers[0], net.layers[1], cfg)
    return ssda_gradients(clean, corrupted, net, cfg.lam)


def sgd_train(net: Network, train_clean, train_corrupted, valid_clean,
              valid_corrupted, loss_kind: str, cfg: LossConfig,
              schedule: SgdSchedule, seed):
    """Mini-batch SGD over the staged schedule; mutates net in place.

    loss_kind is "da" (net must be an encoder/decoder pair) or "ssda".
    Shuffling and batching are reproducible from seed. Returns
    (net, history) where history holds one EpochStats per epoch with the
    losses evaluated on the full train and validation sets after that
    epoch's updates. Raises TrainingDiverged as soon as a batch loss stops
    being finite.
    """
    if loss_kind not in ("da", "ssda"):
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    if loss_kind == "da" and len(net.layers) != 2:
        raise ValueError("da training expects exactly 2 layers (encoder, decoder)")
    tr_y, tr_x = _check_pair(train_clean, train_corrupted)
    va_y, va_x = _check_pair(valid_clean, valid_corrupted)

    rng = make_rng(child_key(seed, TAG_SGD))
    history = []
    n = tr_x.shape[0]
    epoch = 0
    prev_valid = None

    def valid_metric():
        if schedule.validation_loss == "reconstruction":
            return _reconstruction_loss(loss_kind, net, va_y, va_x)
        return _full_loss(loss_kind, net, va_y, va_x, cfg)

    for count, lr in schedule.stages:
        stage_epoch = 0
        while count is None or stage_epoch < count:
            if schedule.max_epochs is not None and epoch >= schedule.max_epochs:
                return net, history
            order = permutation(rng, n)
            for b, start in enumerate(range(0, n, schedule.batch_size)):
                idx = order[start:start + schedule.batch_size]
                batch_loss, grads = _batch_grads(loss_kind, net, tr_y[idx],
                                                 tr_x[idx], cfg)
                if not math.isfinite(batch_loss):
                    raise TrainingDiverged(
                        f"loss became non-finite at epoch {epoch + 1}, batch {b + 1}",
                        epoch=epoch + 1, batch=b + 1)
                for layer, (dw, db) in zip(net.layers, grads):
                    layer.weights -= lr * dw
                    layer.biases -= lr * db
            epoch += 1
            stage_epoch += 1
            for k, layer in enumerate(net.layers):
                if not (np.isfinite(layer.weights).all()
                        and np.isfinite(layer.biases).all()):
                    raise TrainingDiverged(
                        f"layer {k} parameters non-finite after epoch {epoch}",
                        epoch=epoch)
            train_loss = _full_loss(loss_kind, net, tr_y, tr_x, cfg)
            valid_loss = valid_metric()
            history.append(EpochStats(epoch, lr, train_loss, valid_loss))
            if count is None and prev_valid is not None:
                improvement = (
                    (prev_valid - valid_loss) / prev_valid if prev_valid > 0 else 0.0
                )
                if improvement < schedule.stop_rel_improvement:
                    return net, history
            prev_valid = valid_loss
    return net, history
