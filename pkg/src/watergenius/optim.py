"""Batch optimizers for smooth objectives over a flat parameter vector.

Three realizations are provided, matching the training algorithms swept
for the MLP:

* ``scg``       scaled conjugate gradient (Moller 1993), as in the Netlab toolbox
* ``conjgrad``  Polak-Ribiere (PR+) conjugate gradient with backtracking line search
* ``quasinew``  BFGS quasi-Newton with the same line search

Each runs until the gradient norm drops below ``grad_tol`` or ``max_iters``
iterations have elapsed, and records the objective after every iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Objective = Callable[[np.ndarray], float]
Gradient = Callable[[np.ndarray], np.ndarray]

_EPS = np.finfo(np.float64).eps


class DivergenceError(ArithmeticError):
    """The objective or gradient became non-finite."""

    def __init__(self, iteration: int, what: str = "objective"):
        super().__init__(f"{what} became non-finite at iteration {iteration}")
        self.iteration = iteration


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)


def _checked(value, iteration, what="objective"):
    if not np.all(np.isfinite(value)):
        raise DivergenceError(iteration, what)
    return value


def scg(f: Objective, grad: Gradient, x0, max_iters=500, grad_tol=1e-6) -> OptimResult:
    """Scaled conjugate gradient.

    Uses a Levenberg-Marquardt style scale ``beta`` in place of a line
    search; a step is accepted only when it does not increase ``f``, so the
    recorded history is non-increasing.
    """
    x = np.array(x0, dtype=np.float64)
    nparams = x.size
    sigma0 = 1e-4
    beta, betamin, betamax = 1.0, 1e-15, 1e100

    fold = _checked(f(x), 0)
    gradnew = _checked(grad(x), 0, "gradient")
    gradold = gradnew
    d = -gradnew
    success = True
    nsuccess = 0
    history = [float(fold)]
    mu = kappa = theta = 0.0

    j = 0
    gnorm = float(np.linalg.norm(gradnew))
    while j < max_iters and gnorm >= grad_tol:
        j += 1
        if success:
            mu = d @ gradnew
            if mu >= 0:
                d = -gradnew
                mu = d @ gradnew
            kappa = d @ d
            if kappa < _EPS:
                # A vanishing conjugate direction is not convergence; restart
                # along the gradient and stop only if that is negligible too.
                d = -gradnew
                mu = d @ gradnew
                kappa = d @ d
                nsuccess = 0
                if kappa < _EPS:
                    break
            sigma = sigma0 / np.sqrt(kappa)
            gplus = _checked(grad(x + sigma * d), j, "gradient")
            theta = (d @ (gplus - gradnew)) / sigma

        # Increase the effective curvature until it is positive.
        delta = theta + beta * kappa
        if delta <= 0:
            delta = beta * kappa
            beta = beta - theta / kappa
        alpha = -mu / delta

        xnew = x + alpha * d
        fnew = _checked(f(xnew), j)
        comparison = 2.0 * (fnew - fold) / (alpha * mu)
        if comparison >= 0:
            success = True
            nsuccess += 1
            x = xnew
            fold = fnew
            gradold = gradnew
            gradnew = _checked(grad(x), j, "gradient")
            gnorm = float(np.linalg.norm(gradnew))
        else:
            success = False
        history.append(float(fold))

        if comparison < 0.25:
            beta = min(4.0 * beta, betamax)
        if comparison > 0.75:
            beta = max(0.5 * beta, betamin)

        if nsuccess == nparams:
            d = -gradnew
            nsuccess = 0
        elif success:
            gamma = ((gradold - gradnew) @ gradnew) / mu
            d = gamma * d - gradnew

    return OptimResult(x, float(fold), gnorm, j, gnorm < grad_tol, history)


def _backtrack(f, x, fx, d, slope, step, c1=1e-4, min_step=1e-20):
    """Armijo backtracking with safeguarded quadratic interpolation.

    Returns ``(step, f(x + step*d))`` or ``(0.0, fx)`` when no decrease is found.
    """
    while step > min_step:
        fnew = f(x + step * d)
        if np.isfinite(fnew) and fnew <= fx + c1 * step * slope:
            return step, float(fnew)
        if np.isfinite(fnew):
            denom = 2.0 * (fnew - fx - slope * step)
            trial = -slope * step * step / denom if denom > 0 else 0.5 * step
            step = min(max(trial, 0.1 * step), 0.5 * step)
        else:
            step *= 0.1
    return 0.0, fx


def _refine(f, x, fx, d, slope, step, fstep, max_evals=8):
    """Improve an accepted step by quadratic interpolation or doubling.

    Conjugate directions rely on near-exact line minimization; this spends a
    few extra evaluations moving ``step`` towards the minimizer along ``d``.
    """
    for _ in range(max_evals):
        denom = 2.0 * (fstep - fx - slope * step)
        if denom > 0:
            trial = min(-slope * step * step / denom, 10.0 * step)
        else:
            trial = 2.0 * step
        if abs(trial - step) <= 1e-3 * step:
            break
        ftrial = f(x + trial * d)
        if not (np.isfinite(ftrial) and ftrial < fstep):
            break
        step, fstep = trial, float(ftrial)
    return step, fstep


def conjgrad(f: Objective, grad: Gradient, x0, max_iters=500, grad_tol=1e-6) -> OptimResult:
    """Polak-Ribiere (PR+) nonlinear conjugate gradient."""
    x = np.array(x0, dtype=np.float64)
    n = x.size
    fx = float(_checked(f(x), 0))
    g = _checked(grad(x), 0, "gradient")
    d = -g
    gnorm = float(np.linalg.norm(g))
    history = [fx]
    prev_step, prev_slope = None, None
    since_restart = 0

    it = 0
    while it < max_iters and gnorm >= grad_tol:
        it += 1
        slope = g @ d
        if slope >= 0:
            d = -g
            slope = -(g @ g)
            since_restart = 0
        if prev_step is None:
            step0 = 1.0 / max(gnorm, _EPS)
        else:
            step0 = prev_step * prev_slope / slope
        step, fnew = _backtrack(f, x, fx, d, slope, step0)
        if step > 0.0:
            step, fnew = _refine(f, x, fx, d, slope, step, fnew)
        if step == 0.0:
            if since_restart == 0:
                history.append(fx)
                break
            # Stalled along a conjugate direction: retry steepest descent.
            d = -g
            since_restart = 0
            prev_step = None
            history.append(fx)
            continue
        x = x + step * d
        fx = float(_checked(fnew, it))
        gnew = _checked(grad(x), it, "gradient")
        history.append(fx)

        beta = max(0.0, (gnew @ (gnew - g)) / (g @ g))
        since_restart += 1
        if since_restart >= n:
            beta = 0.0
            since_restart = 0
        prev_step, prev_slope = step, slope
        d = -gnew + beta * d
        g = gnew
        gnorm = float(np.linalg.norm(g))

    return OptimResult(x, fx, gnorm, it, gnorm < grad_tol, history)


def quasinew(f: Objective, grad: Gradient, x0, max_iters=500, grad_tol=1e-6) -> OptimResult:
    """BFGS with an inverse-Hessian approximation and backtracking line search."""
    x = np.array(x0, dtype=np.float64)
    n = x.size
    fx = float(_checked(f(x), 0))
    g = _checked(grad(x), 0, "gradient")
    gnorm = float(np.linalg.norm(g))
    eye = np.eye(n)
    h = eye.copy()
    fresh = True
    history = [fx]

    it = 0
    while it < max_iters and gnorm >= grad_tol:
        it += 1
        d = -h @ g
        slope = g @ d
        if slope >= 0:
            h = eye.copy()
            fresh = True
            d = -g
            slope = -(g @ g)
        step0 = min(1.0, 1.0 / max(gnorm, _EPS)) if fresh else 1.0
        step, fnew = _backtrack(f, x, fx, d, slope, step0)
        if step == 0.0:
            history.append(fx)
            if fresh:
                break
            h = eye.copy()
            fresh = True
            continue
        s = step * d
        x = x + s
        fx = float(_checked(fnew, it))
        gnew = _checked(grad(x), it, "gradient")
        history.append(fx)
        y = gnew - g
        sy = s @ y
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            if fresh:
                h = eye * (sy / (y @ y))
                fresh = False
            rho = 1.0 / sy
            hy = h @ y
            h = h - rho * (np.outer(s, hy) + np.outer(hy, s)) + (rho * rho * (y @ hy) + rho) * np.outer(s, s)
        g = gnew
        gnorm = float(np.linalg.norm(g))

    return OptimResult(x, fx, gnorm, it, gnorm < grad_tol, history)


OPTIMIZERS = {"scg": scg, "conjgrad": conjgrad, "quasinew": quasinew}
