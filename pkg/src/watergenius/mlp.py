"""Two-layer perceptron for regression.

    y_k = f_outer( sum_j w2[j, k] * tanh( sum_i w1[i, j] * x_i + w1[d, j] ) + w2[M, k] )

``w1`` has shape ``(d + 1, M)`` and ``w2`` shape ``(M + 1, K)``; the last row
of each holds the biases. The hidden activation is tanh. The error function
is the sum-of-squares ``E = 0.5 * sum((y - t)**2)`` for every output
activation, including softmax (kept only for completeness: with a single
output it is identically 1).

Flat parameter vectors are ``concat(w1.ravel(), w2.ravel())`` in row-major
order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import PatternSet
from .numerics import ShapeError, as_matrix, make_rng
from .optim import OPTIMIZERS, DivergenceError

OUTPUT_ACTIVATIONS = ("linear", "logistic", "softmax")


class TrainingError(RuntimeError):
    """Training failed (e.g. diverged)."""


@dataclass(frozen=True)
class MlpConfig:
    n_inputs: int
    n_hidden: int
    output_activation: str = "linear"
    optimizer: str = "scg"
    max_iters: int = 500
    grad_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.n_inputs < 1:
            raise ValueError("n_inputs must be at least 1")
        if self.n_hidden < 1:
            raise ValueError("n_hidden must be at least 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class MlpModel:
    w1: np.ndarray
    w2: np.ndarray
    config: MlpConfig
    training_error: float = float("nan")
    iterations: int = 0
    converged: bool = False
    history: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        d, m = self.config.n_inputs, self.config.n_hidden
        if self.w1.shape != (d + 1, m):
            raise ShapeError(f"w1 must be {(d + 1, m)}, got {self.w1.shape}")
        if self.w2.ndim != 2 or self.w2.shape[0] != m + 1:
            raise ShapeError(f"w2 must have {m + 1} rows, got shape {self.w2.shape}")
        if not (np.all(np.isfinite(self.w1)) and np.all(np.isfinite(self.w2))):
            raise TrainingError("non-finite weights")

    @property
    def n_outputs(self) -> int:
        return self.w2.shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.w2.ravel()])

    def with_flat(self, theta) -> "MlpModel":
        w1, w2 = unpack(theta, self.config.n_inputs, self.config.n_hidden, self.n_outputs)
        return replace(self, w1=w1, w2=w2)


def n_params(n_inputs: int, n_hidden: int, n_outputs: int = 1) -> int:
    return (n_inputs + 1) * n_hidden + (n_hidden + 1) * n_outputs


def unpack(theta, n_inputs: int, n_hidden: int, n_outputs: int = 1):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size != n_params(n_inputs, n_hidden, n_outputs):
        raise ShapeError(f"parameter vector has {theta.size} entries, expected "
                         f"{n_params(n_inputs, n_hidden, n_outputs)}")
    k = (n_inputs + 1) * n_hidden
    return theta[:k].reshape(n_inputs + 1, n_hidden), theta[k:].reshape(n_hidden + 1, n_outputs)


def _logistic(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _softmax(a):
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _forward(w1, w2, x, activation):
    hidden = np.tanh(x @ w1[:-1] + w1[-1])
    a = hidden @ w2[:-1] + w2[-1]
    if activation == "linear":
        y = a
    elif activation == "logistic":
        y = _logistic(a)
    else:
        y = _softmax(a)
    return y, hidden


def _check_inputs(model_inputs: int, x) -> np.ndarray:
    x = as_matrix(x, "inputs")
    if x.shape[1] != model_inputs:
        raise ShapeError(f"model expects {model_inputs} inputs, got {x.shape[1]} columns")
    return x


def mlp_forward(model: MlpModel, inputs) -> np.ndarray:
    """Network outputs, one row per input row."""
    x = _check_inputs(model.config.n_inputs, inputs)
    y, _ = _forward(model.w1, model.w2, x, model.config.output_activation)
    return y


def _error_and_gradient(w1, w2, x, t, activation, want_grad=True):
    y, hidden = _forward(w1, w2, x, activation)
    r = y - t
    err = 0.5 * float(np.sum(r * r))
    if not want_grad:
        return err, None
    if activation == "linear":
        delta_out = r
    elif activation == "logistic":
        delta_out = r * y * (1.0 - y)
    else:
        delta_out = y * (r - np.sum(r * y, axis=1, keepdims=True))
    g2 = np.vstack([hidden.T @ delta_out, delta_out.sum(axis=0)])
    delta_hidden = (delta_out @ w2[:-1].T) * (1.0 - hidden * hidden)
    g1 = np.vstack([x.T @ delta_hidden, delta_hidden.sum(axis=0)])
    return err, np.concatenate([g1.ravel(), g2.ravel()])


def mlp_error(model: MlpModel, patterns: PatternSet) -> float:
    """Sum-of-squares error ``0.5 * sum((y - t)**2)`` over ``patterns``."""
    x = _check_inputs(model.config.n_inputs, patterns.inputs)
    err, _ = _error_and_gradient(model.w1, model.w2, x, patterns.targets,
                                 model.config.output_activation, want_grad=False)
    return err


def mlp_gradient(model: MlpModel, patterns: PatternSet) -> np.ndarray:
    """Backpropagated gradient of the sum-of-squares error, flattened like ``model.flat()``."""
    x = _check_inputs(model.config.n_inputs, patterns.inputs)
    if patterns.targets.shape[1] != model.n_outputs:
        raise ShapeError(f"model has {model.n_outputs} outputs, targets have "
                         f"{patterns.targets.shape[1]} columns")
    _, g = _error_and_gradient(model.w1, model.w2, x, patterns.targets,
                               model.config.output_activation)
    return g


def init_weights(config: MlpConfig, n_outputs: int = 1) -> np.ndarray:
    """Gaussian weights with sd = 1/sqrt(fan-in), bias counted in the fan-in."""
    rng = make_rng(config.seed)
    d, m = config.n_inputs, config.n_hidden
    w1 = rng.standard_normal((d + 1, m)) / np.sqrt(d + 1)
    w2 = rng.standard_normal((m + 1, n_outputs)) / np.sqrt(m + 1)
    return np.concatenate([w1.ravel(), w2.ravel()])


def mlp_train(config: MlpConfig, patterns: PatternSet, init=None) -> MlpModel:
    """Fit the network to ``patterns`` with the configured batch optimizer.

    Parameters
    ----------
    config : MlpConfig
    patterns : PatternSet
        Training patterns, normally on the normalized scale.
    init : array_like, optional
        Starting flat parameter vector; seeded Gaussian weights otherwise.

    Returns
    -------
    MlpModel
        ``training_error`` holds the final sum-of-squares objective.
    """
    if len(patterns) == 0:
        raise TrainingError("no training patterns")
    x = _check_inputs(config.n_inputs, patterns.inputs)
    t = patterns.targets
    k = t.shape[1]
    activation = config.output_activation
    theta0 = init_weights(config, k) if init is None else np.array(init, dtype=np.float64)
    if theta0.size != n_params(config.n_inputs, config.n_hidden, k):
        raise ShapeError("initial parameter vector has the wrong length")
    shape = (config.n_inputs, config.n_hidden, k)

    def f(theta):
        w1, w2 = unpack(theta, *shape)
        return _error_and_gradient(w1, w2, x, t, activation, want_grad=False)[0]

    def grad(theta):
        w1, w2 = unpack(theta, *shape)
        return _error_and_gradient(w1, w2, x, t, activation)[1]

    optimizer = OPTIMIZERS[config.optimizer]
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            res = optimizer(f, grad, theta0, config.max_iters, config.grad_tol)
    except DivergenceError as exc:
        raise TrainingError(f"{config.optimizer} diverged: {exc}") from exc
    w1, w2 = unpack(res.x, *shape)
    return MlpModel(w1.copy(), w2.copy(), config, res.fun, res.iterations,
                    res.converged, tuple(res.history))


# Sweep grid: {linear, logistic} x {9, 10 hidden} x {scg, conjgrad, quasinew},
# hidden count varying fastest within each optimizer.
def default_mlp_sweep(n_inputs: int = 5, seed: int = 0, max_iters: int = 500,
                      grad_tol: float = 1e-6) -> list[tuple[str, MlpConfig]]:
    out = []
    label = 1
    for activation in ("linear", "logistic"):
        for optimizer in ("scg", "conjgrad", "quasinew"):
            for hidden in (9, 10):
                out.append((f"AZ{label}", MlpConfig(n_inputs, hidden, activation, optimizer,
                                                    max_iters, grad_tol, seed)))
                label += 1
    return out
