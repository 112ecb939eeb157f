"""L2-regularized binary and multinomial logistic regression.

Both fits start from zero and are deterministic. Intercepts are never
penalized. Binary fits use damped Newton steps (the calibrators have at most
four features); multinomial fits use gradient descent with an Armijo
backtracking line search, seeded with a Barzilai-Borwein step length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit, logsumexp, softmax

EPS_CLIP = 1e-12


@dataclass(frozen=True)
class LinearWeights:
    weights: np.ndarray
    intercept: float


@dataclass(frozen=True)
class MultinomialWeights:
    weights: np.ndarray  # (K, d)
    intercept: np.ndarray  # (K,)


@dataclass(frozen=True)
class FitReport:
    converged: bool
    n_iter: int
    grad_norm: float
    objective: float
    separated: bool = False
    # objective after every accepted step, starting point first
    history: tuple = field(default=(), repr=False)


def clip_probs(p):
    return np.clip(p, EPS_CLIP, 1.0 - EPS_CLIP)


def _check_design(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"design matrix must be (n>=1, d>=1), got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("design matrix contains NaN or infinite entries")
    return X


# ---------------------------------------------------------------- binary


def logistic_objective(theta, X, y, l2=0.0, sample_weight=None):
    """Mean negative log-likelihood plus ``l2/2 * ||w||^2`` and its gradient.

    ``theta`` is ``[w_1..w_d, intercept]``.
    """
    w, c = theta[:-1], theta[-1]
    z = X @ w + c
    sw = np.ones_like(y) if sample_weight is None else sample_weight
    total = sw.sum()
    # -log sigma(z) for y=1, -log sigma(-z) for y=0
    nll = -(sw * (y * log_expit(z) + (1.0 - y) * log_expit(-z))).sum() / total
    f = float(nll) + 0.5 * l2 * float(w @ w)
    r = sw * (expit(z) - y) / total
    g = np.empty_like(theta)
    g[:-1] = X.T @ r + l2 * w
    g[-1] = r.sum()
    return f, g


def _logistic_hessian(theta, X, l2, sw):
    z = X @ theta[:-1] + theta[-1]
    p = expit(z)
    h = sw * p * (1.0 - p) / sw.sum()
    Xa = np.hstack([X, np.ones((X.shape[0], 1))])
    H = (Xa * h[:, None]).T @ Xa
    d = X.shape[1]
    H[np.arange(d), np.arange(d)] += l2
    return H


def fit_logistic(X, y, l2: float = 0.0, max_iter: int = 100, tol: float = 1e-8, sample_weight=None):
    """Fit ``P(y=1|x) = sigmoid(w.x + c)``.

    Returns ``(LinearWeights, FitReport)``. With ``l2 == 0`` and separable
    targets the optimum is at infinity; the report then has
    ``separated=True`` and ``converged=False``.
    """
    X = _check_design(X)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.shape[0],):
        raise ValueError("targets must have one entry per row of X")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("binary targets must be 0 or 1")
    if l2 < 0:
        raise ValueError("l2 must be non-negative")
    sw = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)

    theta = np.zeros(X.shape[1] + 1)
    f, g = logistic_objective(theta, X, y, l2, sw)
    history = [f]
    it = 0
    while it < max_iter and float(np.linalg.norm(g)) > tol:
        H = _logistic_hessian(theta, X, l2, sw)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        for _ in range(60):
            cand = theta - t * step
            fc, gc = logistic_objective(cand, X, y, l2, sw)
            if fc <= f:
                break
            t *= 0.5
        else:
            break
        it += 1
        theta, f, g = cand, fc, gc
        history.append(f)
    gnorm = float(np.linalg.norm(g))
    converged = gnorm <= tol

    separated = False
    if l2 == 0.0:
        z = X @ theta[:-1] + theta[-1]
        separated = bool(np.all((z > 0) == (y == 1)) and f < 1e-6)
    report = FitReport(
        converged=converged and not separated, n_iter=it, grad_norm=gnorm, objective=f,
        separated=separated, history=tuple(history),
    )
    return LinearWeights(theta[:-1].copy(), float(theta[-1])), report


def sigmoid_eval(weights: LinearWeights, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != weights.weights.size:
        raise ValueError(f"expected {weights.weights.size} features, got {X.shape[1]}")
    p = expit(X @ weights.weights + weights.intercept)
    return p[0] if single else p


# ----------------------------------------------------------- multinomial


def multinomial_objective(W, b, X, Y, l2=0.0):
    """Mean multinomial NLL plus ``l2/2 * ||W||_F^2``; returns ``(f, dW, db)``.

    ``Y`` is the one-hot target matrix.
    """
    Z = X @ W.T + b
    lse = logsumexp(Z, axis=1)
    n = X.shape[0]
    f = float((lse - (Z * Y).sum(axis=1)).sum() / n) + 0.5 * l2 * float((W * W).sum())
    R = (np.exp(Z - lse[:, None]) - Y) / n
    dW = R.T @ X + l2 * W
    db = R.sum(axis=0)
    return f, dW, db


def fit_multinomial(
    X, y, num_classes: int | None = None, l2: float = 0.0, max_iter: int = 5000, tol: float = 1e-7
):
    """Fit ``P(y=j|x) = softmax(W x + b)_j``.

    Parameters are kept summing to zero across classes for every feature (the
    gradient of this objective already has that property, so zero
    initialization preserves it). Returns ``(MultinomialWeights, FitReport)``.
    """
    X = _check_design(X)
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise ValueError("targets must have one entry per row of X")
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise ValueError("targets must be non-negative integers")
    y = y.astype(np.int64)
    K = int(num_classes if num_classes is not None else y.max() + 1)
    if K < 2 or y.max() >= K:
        raise ValueError(f"targets must lie in 0..{K - 1} with K >= 2")
    if l2 < 0:
        raise ValueError("l2 must be non-negative")
    n, d = X.shape
    Y = np.zeros((n, K))
    Y[np.arange(n), y] = 1.0

    W = np.zeros((K, d))
    b = np.zeros(K)
    f, dW, db = multinomial_objective(W, b, X, Y, l2)
    history = [f]
    gnorm = float(np.sqrt((dW * dW).sum() + (db * db).sum()))
    # Lipschitz-style guess for the first step
    t = 1.0 / (0.5 * (float((X * X).sum()) / n + 1.0) + l2)
    prev = None
    converged = gnorm <= tol
    it = 0
    while not converged and it < max_iter:
        it += 1
        if prev is not None:
            sW, sb, yW, yb = W - prev[0], b - prev[1], dW - prev[2], db - prev[3]
            sy = float((sW * yW).sum() + sb @ yb)
            if sy > 0:
                t = float((sW * sW).sum() + sb @ sb) / sy
        g2 = gnorm * gnorm
        for _ in range(60):
            Wc, bc = W - t * dW, b - t * db
            fc, dWc, dbc = multinomial_objective(Wc, bc, X, Y, l2)
            if fc <= f - 1e-4 * t * g2:
                break
            t *= 0.5
        else:
            break
        prev = (W, b, dW, db)
        W, b, f, dW, db = Wc, bc, fc, dWc, dbc
        history.append(f)
        gnorm = float(np.sqrt((dW * dW).sum() + (db * db).sum()))
        converged = gnorm <= tol

    separated = False
    if l2 == 0.0 and f < 1e-6:
        separated = True
    report = FitReport(converged=converged and not separated, n_iter=it, grad_norm=gnorm, objective=f,
                       separated=separated, history=tuple(history))
    return MultinomialWeights(W, b), report


def softmax_eval(weights: MultinomialWeights, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != weights.weights.shape[1]:
        raise ValueError(f"expected {weights.weights.shape[1]} features, got {X.shape[1]}")
    P = softmax(X @ weights.weights.T + weights.intercept, axis=1)
    return P[0] if single else P
