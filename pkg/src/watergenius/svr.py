"""epsilon-insensitive support vector regression.

The dual problem

    max  -1/2 sum_ij c_i c_j K(x_i, x_j) - eps * sum_i (a_i + a*_i) + sum_i y_i c_i
    s.t. 0 <= a_i, a*_i <= C,  sum_i c_i = 0,      with c_i = a_i - a*_i

is solved by sequential minimal optimization over the 2n variables
``(a, a*)`` using second-order working-set selection (Fan, Chen & Lin 2005).
The solver stops once the maximal KKT violation ``m(a) - M(a)`` falls below
``kkt_tol``. Predictions are ``f(x) = sum_i c_i K(x_i, x) + b``.

Kernel formulas (``d`` = input dimension)::

    linear    x.y
    poly      (scale * x.y + offset) ** degree          scale, offset default to 1
    rbf       exp(-||x - y||**2 / (2 sigma**2))
    erbf      exp(-||x - y|| / (2 sigma**2))
    spline    prod_i 1 + x_i y_i + x_i y_i m_i - (x_i + y_i)/2 m_i**2 + m_i**3/3,
              m_i = min(x_i, y_i)
    bspline   prod_i B_{2 degree + 1}(x_i - y_i), centred cardinal B-spline
    anova     sum over index subsets S with 1 <= |S| <= max(max_order, 1)
              of prod_{i in S} exp(-(x_i - y_i)**2)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np

from .dataio import PatternSet
from .metrics import safe_percentage_error
from .numerics import NumericsError, ShapeError, as_matrix

FAMILIES = ("anova", "bspline", "erbf", "linear", "poly", "rbf", "spline")

_APPLICABLE = {
    "anova": {"max_order"},
    "bspline": {"degree"},
    "erbf": {"sigma"},
    "linear": set(),
    "poly": {"degree", "scale", "offset"},
    "rbf": {"sigma"},
    "spline": set(),
}
_REQUIRED = {
    "anova": {"max_order"},
    "bspline": {"degree"},
    "erbf": {"sigma"},
    "poly": {"degree"},
    "rbf": {"sigma"},
}
_PARAMS = ("degree", "scale", "offset", "sigma", "max_order")
_DISPLAY = {"anova": "Anova", "bspline": "BSpline", "erbf": "ERBF", "linear": "Linear",
            "poly": "Poly", "rbf": "RBF", "spline": "Spline"}

_TAU = 1e-12


@dataclass(frozen=True)
class Kernel:
    """Kernel family plus exactly the hyperparameters that family uses."""

    family: str
    degree: int | None = None
    scale: float | None = None
    offset: float | None = None
    sigma: float | None = None
    max_order: int | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        given = {p for p in _PARAMS if getattr(self, p) is not None}
        extra = given - _APPLICABLE[self.family]
        if extra:
            raise ValueError(f"{self.family} kernel does not take {sorted(extra)}")
        missing = _REQUIRED.get(self.family, set()) - given
        if missing:
            raise ValueError(f"{self.family} kernel needs {sorted(missing)}")
        if self.degree is not None and self.degree < 0:
            raise ValueError("degree must be nonnegative")
        if self.max_order is not None and self.max_order < 0:
            raise ValueError("max_order must be nonnegative")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def label(self) -> str:
        name = _DISPLAY[self.family]
        arg = {"anova": self.max_order, "bspline": self.degree, "erbf": self.sigma,
               "poly": self.degree, "rbf": self.sigma}.get(self.family)
        if arg is None:
            return name
        return f"{name}({arg:g})"

    def params(self) -> dict:
        return {p: getattr(self, p) for p in _PARAMS if getattr(self, p) is not None}


def _centred_bspline(u, n):
    """Centred cardinal B-spline of degree ``n`` (support [-(n+1)/2, (n+1)/2])."""
    half = (n + 1) / 2.0
    out = np.zeros_like(u)
    for r in range(n + 2):
        out += (-1) ** r * comb(n + 1, r) * np.maximum(u + half - r, 0.0) ** n
    return out / factorial(n)


def kernel_matrix(k: Kernel, x, y) -> np.ndarray:
    """Gram block ``K[i, j] = k(x_i, y_j)``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[1] != y.shape[1]:
        raise ShapeError(f"kernel inputs differ in dimension: {x.shape[1]} vs {y.shape[1]}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = _kernel_block(k, x, y)
    if not np.all(np.isfinite(out)):
        raise NumericsError(f"{k.label} kernel produced non-finite values")
    return out


def _kernel_block(k: Kernel, x, y) -> np.ndarray:
    fam = k.family
    if fam in ("linear", "poly"):
        dot = x @ y.T
        if fam == "linear":
            out = dot
        else:
            scale = 1.0 if k.scale is None else k.scale
            offset = 1.0 if k.offset is None else k.offset
            out = (scale * dot + offset) ** k.degree
    elif fam in ("rbf", "erbf"):
        sq = np.zeros((x.shape[0], y.shape[0]))
        for i in range(x.shape[1]):
            diff = x[:, i, None] - y[None, :, i]
            sq += diff * diff
        s2 = 2.0 * k.sigma * k.sigma
        out = np.exp(-sq / s2) if fam == "rbf" else np.exp(-np.sqrt(sq) / s2)
    elif fam == "spline":
        out = np.ones((x.shape[0], y.shape[0]))
        for i in range(x.shape[1]):
            a, b = x[:, i, None], y[None, :, i]
            ab = a * b
            m = np.minimum(a, b)
            out *= 1.0 + ab + ab * m - 0.5 * (a + b) * m * m + m * m * m / 3.0
    elif fam == "bspline":
        n = 2 * k.degree + 1
        out = np.ones((x.shape[0], y.shape[0]))
        for i in range(x.shape[1]):
            out *= _centred_bspline(x[:, i, None] - y[None, :, i], n)
    else:  # anova
        order = max(k.max_order, 1)
        # elementary symmetric polynomials e_1..e_order of z_i = exp(-(x_i - y_i)^2)
        e = [np.ones((x.shape[0], y.shape[0]))] + [np.zeros((x.shape[0], y.shape[0]))
                                                     for _ in range(order)]
        for i in range(x.shape[1]):
            diff = x[:, i, None] - y[None, :, i]
            z = np.exp(-diff * diff)
            for q in range(order, 0, -1):
                e[q] = e[q] + z * e[q - 1]
        out = sum(e[1:])
    return out


def kernel_eval(k: Kernel, x, y) -> float:
    """Single kernel value ``k(x, y)``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ShapeError(f"kernel inputs differ in dimension: {x.size} vs {y.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NumericsError("kernel inputs must be finite")
    try:
        return float(kernel_matrix(k, x[None, :], y[None, :])[0, 0])
    except NumericsError:
        raise NumericsError(f"{k.label} kernel is non-finite at x={x.tolist()}, y={y.tolist()}") from None


@dataclass(frozen=True)
class SvrConfig:
    """SVR hyperparameters.

    ``max_passes`` bounds the solver at ``max_passes * n`` pair updates. The
    solver is deterministic; ``seed`` is carried for sweep bookkeeping.
    """

    kernel: Kernel
    c: float = 10.0
    epsilon: float = 0.01
    kkt_tol: float = 1e-3
    max_passes: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")
        if not self.kkt_tol > 0:
            raise ValueError("kkt_tol must be positive")
        if self.max_passes < 1:
            raise ValueError("max_passes must be at least 1")


@dataclass(frozen=True)
class SvrModel:
    support_vectors: np.ndarray
    dual_coefficients: np.ndarray
    b: float
    config: SvrConfig
    training_error: float = float("nan")
    converged: bool = True
    kkt_violation: float = 0.0
    iterations: int = 0
    dual_objective: float = float("nan")
    n_features: int = field(default=0)

    def __post_init__(self):
        coef = np.asarray(self.dual_coefficients, dtype=np.float64).reshape(-1)
        sv = np.asarray(self.support_vectors, dtype=np.float64)
        if sv.ndim != 2:
            sv = sv.reshape(coef.size, -1) if coef.size else np.zeros((0, self.n_features))
        if sv.shape[0] != coef.size:
            raise ShapeError("one dual coefficient per support vector required")
        object.__setattr__(self, "dual_coefficients", coef)
        object.__setattr__(self, "support_vectors", sv)
        if not self.n_features:
            object.__setattr__(self, "n_features", sv.shape[1])


@dataclass
class DualSolution:
    alpha: np.ndarray
    alpha_star: np.ndarray
    b: float
    violation: float
    iterations: int
    converged: bool

    @property
    def coefficients(self) -> np.ndarray:
        return self.alpha - self.alpha_star


def dual_objective(gram, y, coef, alpha_sum, epsilon) -> float:
    """Dual objective in its maximisation form."""
    coef = np.asarray(coef, dtype=np.float64)
    return float(-0.5 * coef @ gram @ coef - epsilon * alpha_sum + np.asarray(y) @ coef)


def _violation(a, z, grad, c):
    up = ((z > 0) & (a < c)) | ((z < 0) & (a > 0))
    low = ((z > 0) & (a > 0)) | ((z < 0) & (a < c))
    mzg = -z * grad
    m = mzg[up].max() if up.any() else -np.inf
    big_m = mzg[low].min() if low.any() else np.inf
    return m - big_m


def solve_dual(gram, y, c, epsilon, tol, max_iter) -> DualSolution:
    """SMO over the stacked variables ``(a, a*)`` with labels ``z = (+1, -1)``.

    Minimises ``1/2 v'Qv + p'v`` with ``Q_st = z_s z_t K``, ``p = (eps - y, eps + y)``.
    """
    gram = np.asarray(gram, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = y.size
    z = np.concatenate([np.ones(n), -np.ones(n)])
    idx = np.concatenate([np.arange(n), np.arange(n)])
    a = np.zeros(2 * n)
    grad = np.concatenate([epsilon - y, epsilon + y])
    diag = np.diag(gram)
    qd = np.concatenate([diag, diag])

    it = 0
    converged = False
    while it < max_iter:
        mzg = -z * grad
        up = np.where(z > 0, a < c, a > 0)
        low = np.where(z > 0, a > 0, a < c)
        cand = np.where(up, mzg, -np.inf)
        i = int(np.argmax(cand))
        gmax = cand[i]
        zg_low = np.where(low, -mzg, -np.inf)
        gmax2 = zg_low.max()
        if gmax + gmax2 < tol:
            converged = True
            break
        k_i = gram[idx[i], idx]
        bdiff = gmax - mzg
        quad = qd[i] + qd - 2.0 * k_i
        quad = np.where(quad > 0, quad, _TAU)
        score = np.where(low & (bdiff > 0), -(bdiff * bdiff) / quad, np.inf)
        j = int(np.argmin(score))
        if not np.isfinite(score[j]):
            converged = True
            break
        it += 1

        qij = z[i] * z[j] * gram[idx[i], idx[j]]
        old_i, old_j = a[i], a[j]
        if z[i] != z[j]:
            quad_ij = qd[i] + qd[j] + 2.0 * qij
            if quad_ij <= 0:
                quad_ij = _TAU
            delta = (-grad[i] - grad[j]) / quad_ij
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = -diff
            if diff > 0:
                if a[i] > c:
                    a[i] = c
                    a[j] = c - diff
            elif a[j] > c:
                a[j] = c
                a[i] = c + diff
        else:
            quad_ij = qd[i] + qd[j] - 2.0 * qij
            if quad_ij <= 0:
                quad_ij = _TAU
            delta = (grad[i] - grad[j]) / quad_ij
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > c:
                if a[i] > c:
                    a[i] = c
                    a[j] = total - c
                if a[j] > c:
                    a[j] = c
                    a[i] = total - c
            else:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = total
                if a[i] < 0:
                    a[i] = 0.0
                    a[j] = total
        d_i, d_j = a[i] - old_i, a[j] - old_j
        grad += (z * z[i] * d_i) * k_i + (z * z[j] * d_j) * gram[idx[j], idx]

    violation = float(_violation(a, z, grad, c))
    if not converged and violation < tol:
        converged = True

    # threshold from free variables, else midpoint of the feasible interval
    zg = z * grad
    at_upper = a >= c
    at_lower = a <= 0
    free = ~(at_upper | at_lower)
    if free.any():
        rho = float(zg[free].mean())
    else:
        ub_mask = (at_upper & (z < 0)) | (at_lower & (z > 0))
        lb_mask = (at_upper & (z > 0)) | (at_lower & (z < 0))
        ub = zg[ub_mask].min() if ub_mask.any() else np.inf
        lb = zg[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float((ub + lb) / 2.0)
    return DualSolution(a[:n].copy(), a[n:].copy(), -rho, violation, it, converged)


def svr_train(config: SvrConfig, patterns: PatternSet) -> SvrModel:
    """Fit an epsilon-SVR to ``patterns``.

    A run that exhausts ``max_passes`` returns a model with ``converged=False``
    and the remaining worst KKT violation in ``kkt_violation``.
    """
    if len(patterns) == 0:
        raise ValueError("no training patterns")
    x = as_matrix(patterns.inputs, "inputs")
    y = patterns.targets[:, 0]
    gram = kernel_matrix(config.kernel, x, x)
    sol = solve_dual(gram, y, config.c, config.epsilon, config.kkt_tol,
                     config.max_passes * max(len(y), 1))
    coef = sol.coefficients
    objective = dual_objective(gram, y, coef, float(np.sum(sol.alpha + sol.alpha_star)),
                               config.epsilon)
    fitted = gram @ coef + sol.b
    keep = coef != 0
    err = safe_percentage_error(patterns.to_ml(fitted), patterns.targets_ml())
    return SvrModel(x[keep].copy(), coef[keep].copy(), sol.b, config, err, sol.converged,
                    sol.violation, sol.iterations, objective, x.shape[1])


def svr_predict(model: SvrModel, inputs) -> np.ndarray:
    """``f(x) = sum_i c_i K(sv_i, x) + b`` as a column."""
    x = as_matrix(inputs, "inputs")
    if x.shape[1] != model.n_features:
        raise ShapeError(f"model expects {model.n_features} inputs, got {x.shape[1]}")
    if model.dual_coefficients.size == 0:
        return np.full((x.shape[0], 1), model.b)
    k = kernel_matrix(model.config.kernel, x, model.support_vectors)
    return (k @ model.dual_coefficients + model.b)[:, None]


def default_kernel_sweep(c: float = 10.0, epsilon: float = 0.01, kkt_tol: float = 1e-3,
                         max_passes: int = 10_000, seed: int = 0) -> list[SvrConfig]:
    """The 17 standard kernel configurations, Anova(0) through Spline."""
    kernels = (
        [Kernel("anova", max_order=o) for o in range(4)]
        + [Kernel("bspline", degree=p) for p in range(2)]
        + [Kernel("erbf", sigma=float(s)) for s in (1, 2, 3)]
        + [Kernel("linear")]
        + [Kernel("poly", degree=p) for p in (1, 2, 3)]
        + [Kernel("rbf", sigma=float(s)) for s in (5, 6, 7)]
        + [Kernel("spline")]
    )
    return [SvrConfig(k, c, epsilon, kkt_tol, max_passes, seed) for k in kernels]
