"""Radial basis function networks trained in two stages.

Stage one places the centres by fitting a spherical Gaussian mixture to the
input vectors with a few EM iterations. Stage two solves for the output
weights by least squares through the pseudo-inverse of the design matrix
``Phi`` (one column per centre plus a trailing all-ones bias column).

Basis functions of the Euclidean distance ``r``::

    gaussian  exp(-r**2 / (2 * width**2))
    tps       r**2 * log(r)      (0 at r = 0)
    r4logr    r**4 * log(r)      (0 at r = 0)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataio import PatternSet
from .metrics import safe_percentage_error
from .numerics import ShapeError, as_matrix, make_rng, pseudo_inverse

log = logging.getLogger(__name__)

ACTIVATIONS = ("gaussian", "tps", "r4logr")
WIDTH_FLOOR = 1e-6


@dataclass(frozen=True)
class RbfConfig:
    n_inputs: int
    n_hidden: int
    activation: str = "gaussian"
    em_iters: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_inputs < 1:
            raise ValueError("n_inputs must be at least 1")
        if self.n_hidden < 1:
            raise ValueError("n_hidden must be at least 1")
        if self.em_iters < 1:
            raise ValueError("em_iters must be at least 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class CentreFit:
    """Outcome of EM centre placement."""

    centres: np.ndarray
    widths: np.ndarray
    priors: np.ndarray | None = None
    log_likelihood: tuple[float, ...] = ()
    reinitialized: int = 0


@dataclass(frozen=True)
class RbfModel:
    centres: np.ndarray
    widths: np.ndarray
    w: np.ndarray
    config: RbfConfig
    training_error: float = float("nan")
    em: CentreFit | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        m, d = self.config.n_hidden, self.config.n_inputs
        if self.centres.shape != (m, d):
            raise ShapeError(f"centres must be {(m, d)}, got {self.centres.shape}")
        if self.w.ndim != 2 or self.w.shape[0] != m + 1:
            raise ShapeError(f"w must have {m + 1} rows, got {self.w.shape}")
        if self.config.activation == "gaussian" and not np.all(self.widths > 0):
            raise ValueError("gaussian widths must be positive")


def rbf_basis(activation: str, r, width=None):
    """Basis value(s) for distance(s) ``r``; ``width`` is used by gaussian only."""
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("distances must be nonnegative")
    if activation == "gaussian":
        if width is None:
            raise ValueError("gaussian basis needs a width")
        width = np.asarray(width, dtype=np.float64)
        return np.exp(-(r * r) / (2.0 * width * width))
    if activation not in ("tps", "r4logr"):
        raise ValueError(f"unknown activation {activation!r}")
    power = 2 if activation == "tps" else 4
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r > 0, r**power * np.log(np.where(r > 0, r, 1.0)), 0.0)
    return out[()] if out.ndim == 0 else out


def _distances(x, centres):
    sq = np.sum((x[:, None, :] - centres[None, :, :]) ** 2, axis=-1)
    return np.sqrt(np.maximum(sq, 0.0))


def design_matrix(inputs, centres, widths, activation) -> np.ndarray:
    """``n x (M + 1)`` basis activations with a trailing all-ones bias column."""
    x = as_matrix(inputs, "inputs")
    r = _distances(x, np.asarray(centres, dtype=np.float64))
    phi = rbf_basis(activation, r, widths[None, :] if activation == "gaussian" else None)
    return np.column_stack([phi, np.ones(x.shape[0])])


def _log_components(x, means, variances, priors):
    d = x.shape[1]
    sq = np.sum((x[:, None, :] - means[None, :, :]) ** 2, axis=-1)
    return (np.log(priors)[None, :] - 0.5 * sq / variances[None, :]
            - 0.5 * d * np.log(2.0 * np.pi * variances)[None, :])


def _logsumexp(a):
    top = a.max(axis=1, keepdims=True)
    return (top + np.log(np.exp(a - top).sum(axis=1, keepdims=True)))[:, 0]


def rbf_place_centres_em(patterns: PatternSet, config: RbfConfig) -> CentreFit:
    """Fit a spherical Gaussian mixture to the pattern inputs by EM.

    Components start at distinct randomly chosen patterns with variance equal
    to the squared distance to the nearest other centre. Means become the
    centres and component standard deviations the widths (floored at
    ``WIDTH_FLOOR``). A component left with no responsibility mass is
    restarted at a random pattern.

    When ``n_hidden`` equals the number of distinct patterns the assignment is
    degenerate: every pattern becomes its own centre with a floored width.
    """
    x = as_matrix(patterns.inputs, "inputs")
    n, d = x.shape
    m = config.n_hidden
    if d != config.n_inputs:
        raise ShapeError(f"config expects {config.n_inputs} inputs, patterns have {d}")
    _, first = np.unique(x, axis=0, return_index=True)
    distinct = np.sort(first)
    if m > distinct.size:
        raise ValueError(f"{m} centres requested but only {distinct.size} distinct patterns")
    rng = make_rng(config.seed)
    var_floor = WIDTH_FLOOR**2

    if m == distinct.size:
        means = x[distinct].copy()
        variances = np.full(m, var_floor)
        priors = np.full(m, 1.0 / m)
        ll = float(_logsumexp(_log_components(x, means, variances, priors)).sum())
        return CentreFit(means, np.sqrt(variances), priors, (ll,), 0)

    means = x[rng.choice(distinct, size=m, replace=False)].copy()
    if m > 1:
        cd = np.sum((means[:, None, :] - means[None, :, :]) ** 2, axis=-1)
        np.fill_diagonal(cd, np.inf)
        variances = cd.min(axis=1)
    else:
        variances = np.array([np.mean(np.sum((x - means[0]) ** 2, axis=1)) / d])
    variances = np.maximum(variances, var_floor)
    priors = np.full(m, 1.0 / m)

    history = []
    reinit = 0
    for _ in range(config.em_iters):
        logp = _log_components(x, means, variances, priors)
        norm = _logsumexp(logp)
        history.append(float(norm.sum()))
        resp = np.exp(logp - norm[:, None])
        mass = resp.sum(axis=0)
        for j in np.flatnonzero(mass < 1e-10):
            reinit += 1
            means[j] = x[rng.integers(n)]
            resp[:, j] = 0.0
            mass[j] = 0.0
        live = mass > 0
        means[live] = (resp[:, live].T @ x) / mass[live][:, None]
        sq = np.sum((x[:, None, :] - means[None, :, :]) ** 2, axis=-1)
        variances[live] = np.sum(resp[:, live] * sq[:, live], axis=0) / (d * mass[live])
        variances = np.maximum(variances, var_floor)
        priors = np.where(live, mass / n, 1.0 / n)
        priors = priors / priors.sum()
    if reinit:
        log.info("EM restarted %d empty component(s)", reinit)
    final = float(_logsumexp(_log_components(x, means, variances, priors)).sum())
    history.append(final)
    return CentreFit(means, np.sqrt(variances), priors, tuple(history), reinit)


def rbf_train(config: RbfConfig, patterns: PatternSet, reuse_centres=None) -> RbfModel:
    """Two-stage RBF training.

    Parameters
    ----------
    config : RbfConfig
    patterns : PatternSet
    reuse_centres : CentreFit or (centres, widths), optional
        Centres (and widths) taken from an earlier network instead of
        running EM. The arrays are adopted as-is.

    Returns
    -------
    RbfModel
        ``training_error`` is the MAPE (%) on the training patterns, in
        megaliters when the patterns carry a scaler.
    """
    if len(patterns) == 0:
        raise ValueError("no training patterns")
    x = as_matrix(patterns.inputs, "inputs")
    if x.shape[1] != config.n_inputs:
        raise ShapeError(f"config expects {config.n_inputs} inputs, patterns have {x.shape[1]}")
    if reuse_centres is None:
        fit = rbf_place_centres_em(patterns, config)
    elif isinstance(reuse_centres, CentreFit):
        fit = reuse_centres
    else:
        centres, widths = reuse_centres
        fit = CentreFit(np.asarray(centres, dtype=np.float64), np.asarray(widths, dtype=np.float64))
    if fit.centres.shape != (config.n_hidden, config.n_inputs):
        raise ShapeError(f"reused centres have shape {fit.centres.shape}, expected "
                         f"{(config.n_hidden, config.n_inputs)}")
    phi = design_matrix(x, fit.centres, fit.widths, config.activation)
    w = pseudo_inverse(phi) @ patterns.targets
    fitted = phi @ w
    err = safe_percentage_error(patterns.to_ml(fitted), patterns.targets_ml())
    return RbfModel(fit.centres, fit.widths, w, config, err, fit)


def rbf_forward(model: RbfModel, inputs) -> np.ndarray:
    """``y(x) = sum_j w[j] * phi_j(||x - c_j||) + w[M]``."""
    x = as_matrix(inputs, "inputs")
    if x.shape[1] != model.config.n_inputs:
        raise ShapeError(f"model expects {model.config.n_inputs} inputs, got {x.shape[1]}")
    return design_matrix(x, model.centres, model.widths, model.config.activation) @ model.w


def default_rbf_sweep(n_inputs: int = 5, seed: int = 0, em_iters: int = 10):
    """Sweep grid as ``(label, config, reuse_label)``; TPS and r4logr nets
    reuse the Gaussian net with the same hidden count."""
    out = []
    label = 1
    gaussian_label = {}
    for activation in ACTIVATIONS:
        for hidden in (9, 10):
            name = f"AX{label}"
            reuse = None if activation == "gaussian" else gaussian_label[hidden]
            if activation == "gaussian":
                gaussian_label[hidden] = name
            out.append((name, RbfConfig(n_inputs, hidden, activation, em_iters, seed), reuse))
            label += 1
    return out
