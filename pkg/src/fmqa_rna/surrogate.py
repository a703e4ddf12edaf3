"""Factorization-machine surrogate and its exact QUBO form."""
from __future__ import annotations

from dataclasses import dataclass, field

import math

import numpy as np
from numba import njit


class SurrogateError(ValueError):
    pass


class DimensionMismatch(SurrogateError):
    pass


class EmptyDataset(SurrogateError):
    pass


class AllZeroCoefficients(SurrogateError):
    pass


@dataclass
class QuboProblem:
    """``H(x) = offset + sum_{i<=j} Q[i, j] x_i x_j`` with ``Q`` upper triangular."""

    Q: np.ndarray
    offset: float = 0.0

    def __post_init__(self) -> None:
        Q = np.asarray(self.Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DimensionMismatch(f"QUBO matrix must be square, got shape {Q.shape}")
        if np.any(np.tril(Q, -1)):
            # fold a general matrix onto the upper triangle
            Q = np.triu(Q) + np.triu(Q.T, 1)
        if not np.all(np.isfinite(Q)) or not np.isfinite(self.offset):
            raise SurrogateError("QUBO coefficients must be finite")
        self.Q = Q
        self.offset = float(self.offset)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    def evaluate(self, x) -> float | np.ndarray:
        """Energy of one configuration, or of each row of a 2-D batch."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n:
            raise DimensionMismatch(f"expected {self.n} variables, got {x.shape[-1]}")
        if x.ndim == 1:
            return float(self.offset + x @ self.Q @ x)
        return self.offset + np.einsum("bi,ij,bj->b", x, self.Q, x)

    def symmetric(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(linear, coupling)`` with ``coupling`` symmetric and zero-diagonal."""
        linear = np.diag(self.Q).copy()
        upper = np.triu(self.Q, 1)
        return linear, upper + upper.T


@dataclass
class FmModel:
    w0: float
    w: np.ndarray
    V: np.ndarray
    train_loss: float = field(default=float("nan"), compare=False)

    def __post_init__(self) -> None:
        self.w = np.asarray(self.w, dtype=np.float64)
        self.V = np.asarray(self.V, dtype=np.float64)
        if self.V.ndim != 2 or self.V.shape[0] != self.w.shape[0]:
            raise DimensionMismatch(f"V has shape {self.V.shape}, expected ({self.w.shape[0]}, K)")

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def k(self) -> int:
        return self.V.shape[1]

    def to_dict(self) -> dict:
        return {"N": self.n, "K": self.k, "w0": self.w0, "w": self.w.tolist(), "V": self.V.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> FmModel:
        model = cls(float(doc["w0"]), np.array(doc["w"], dtype=float), np.array(doc["V"], dtype=float).reshape(doc["N"], doc["K"]))
        if model.n != doc["N"] or model.k != doc["K"]:
            raise DimensionMismatch("FM document dimensions disagree with its arrays")
        return model


@dataclass
class Dataset:
    """Evaluated points in insertion order."""

    X: list[np.ndarray] = field(default_factory=list)
    y: list[float] = field(default_factory=list)

    def append(self, x, value: float) -> None:
        x = np.asarray(x, dtype=np.int8)
        if self.X and x.shape != self.X[0].shape:
            raise DimensionMismatch(f"point has {x.shape[0]} variables, dataset has {self.X[0].shape[0]}")
        if not np.isfinite(value):
            raise SurrogateError(f"objective value {value} is not finite")
        self.X.append(x)
        self.y.append(float(value))

    def __len__(self) -> int:
        return len(self.y)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.vstack(self.X).astype(np.float64), np.asarray(self.y, dtype=np.float64)


def fm_predict(model: FmModel, x) -> float | np.ndarray:
    """FM output for one configuration or a batch, via the O(NK) identity."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.n:
        raise DimensionMismatch(f"expected {model.n} variables, got {x.shape[-1]}")
    xv = x @ model.V
    pairwise = 0.5 * ((xv**2).sum(axis=-1) - (x**2) @ (model.V**2).sum(axis=1))
    out = model.w0 + x @ model.w + pairwise
    return float(out) if x.ndim == 1 else out


def mse_and_grad(w0: float, w: np.ndarray, V: np.ndarray, X: np.ndarray, y: np.ndarray, X2: np.ndarray | None = None):
    """Mean squared error of the FM on ``(X, y)`` and its gradients.

    ``X2`` is ``X**2``; pass it when calling repeatedly on the same data.
    Returns ``(loss, g_w0, g_w, g_V)``.
    """
    if X2 is None:
        X2 = X * X
    XV = X @ V
    pred = w0 + X @ w + 0.5 * ((XV**2).sum(axis=1) - X2 @ (V * V).sum(axis=1))
    resid = pred - y
    loss = float(resid @ resid) / len(y)
    g = (2.0 / len(y)) * resid
    g_w0 = float(g.sum())
    g_w = X.T @ g
    g_V = X.T @ (g[:, None] * XV) - V * (X2.T @ g)[:, None]
    return loss, g_w0, g_w, g_V


def fm_train(
    data: Dataset,
    k: int = 12,
    epochs: int = 1000,
    lr: float = 0.01,
    seed: int | np.random.SeedSequence = 0,
    weight_decay: float = 1e-2,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    init_std: float = 0.01,
) -> FmModel:
    """Fit an FM by full-batch AdamW on the mean squared error.

    Starts from ``w0 = mean(y)``, ``w = 0`` and ``V ~ N(0, init_std)`` drawn
    from ``seed``. The returned model carries the loss of the last epoch in
    ``train_loss``.
    """
    if len(data) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if epochs < 1 or k < 1:
        raise SurrogateError("epochs and K must be at least 1")
    X, y = data.arrays()
    n = X.shape[1]
    rng = np.random.default_rng(seed)
    theta = np.empty(1 + n + n * k)
    theta[0] = y.mean()
    theta[1 : 1 + n] = 0.0
    theta[1 + n :] = rng.normal(0.0, init_std, size=n * k)
    rows, cols = np.nonzero(X)
    ptr = np.searchsorted(rows, np.arange(X.shape[0] + 1))
    loss = _adamw_fit(
        cols.astype(np.int64), X[rows, cols], ptr, y, theta, n, k, epochs, lr, weight_decay, betas[0], betas[1], eps
    )
    return FmModel(float(theta[0]), theta[1 : 1 + n].copy(), theta[1 + n :].reshape(n, k).copy(), train_loss=loss)


@njit(cache=True)
def _fm_sweep(idx, val, ptr, y, theta, n, k, grad, xv):
    """Accumulate the MSE gradient into ``grad`` over the sparse rows; return the loss."""
    m = y.shape[0]
    w = theta[1 : 1 + n]
    V = theta[1 + n :].reshape((n, k))
    gw = grad[1 : 1 + n]
    gV = grad[1 + n :].reshape((n, k))
    vsq = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for f in range(k):
            acc += V[i, f] * V[i, f]
        vsq[i] = acc
    grad[:] = 0.0
    loss = 0.0
    for r in range(m):
        s = theta[0]
        sq = 0.0
        xv[:] = 0.0
        for a in range(ptr[r], ptr[r + 1]):
            i = idx[a]
            x = val[a]
            s += w[i] * x
            sq += vsq[i] * x * x
            for f in range(k):
                xv[f] += V[i, f] * x
        pair = 0.0
        for f in range(k):
            pair += xv[f] * xv[f]
        resid = s + 0.5 * (pair - sq) - y[r]
        loss += resid * resid
        g = 2.0 * resid / m
        grad[0] += g
        for a in range(ptr[r], ptr[r + 1]):
            i = idx[a]
            gx = g * val[a]
            gxx = gx * val[a]
            gw[i] += gx
            for f in range(k):
                gV[i, f] += gx * xv[f] - gxx * V[i, f]
    return loss / m


@njit(cache=True)
def _adamw_fit(idx, val, ptr, y, theta, n, k, epochs, lr, weight_decay, b1, b2, eps):
    size = theta.shape[0]
    grad = np.zeros(size)
    mom = np.zeros(size)
    vel = np.zeros(size)
    xv = np.zeros(k)
    decay = 1.0 - lr * weight_decay
    for t in range(1, epochs + 1):
        _fm_sweep(idx, val, ptr, y, theta, n, k, grad, xv)
        c1 = 1.0 - b1**t
        c2 = 1.0 - b2**t
        for p in range(size):
            g = grad[p]
            mom[p] = b1 * mom[p] + (1.0 - b1) * g
            vel[p] = b2 * vel[p] + (1.0 - b2) * g * g
            theta[p] = theta[p] * decay - lr * (mom[p] / c1) / (math.sqrt(vel[p] / c2) + eps)
    return _fm_sweep(idx, val, ptr, y, theta, n, k, grad, xv)


def fm_to_qubo(model: FmModel) -> QuboProblem:
    """Diagonal from the linear weights, upper triangle from ``<v_i, v_j>``."""
    Q = np.triu(model.V @ model.V.T, 1)
    Q[np.diag_indices_from(Q)] = model.w
    return QuboProblem(Q, model.w0)


def add_penalty(q: QuboProblem, penalty: QuboProblem) -> QuboProblem:
    if penalty.n != q.n:
        raise DimensionMismatch(f"penalty over {penalty.n} variables, problem over {q.n}")
    return QuboProblem(q.Q + penalty.Q, q.offset + penalty.offset)


def normalize_qubo(q: QuboProblem) -> QuboProblem:
    """Divide all coefficients, offset included, by the largest ``|Q[i, j]|``."""
    scale = float(np.abs(q.Q).max()) if q.n else 0.0
    if scale == 0.0:
        raise AllZeroCoefficients("cannot normalize a QUBO whose coefficients are all zero")
    return QuboProblem(q.Q / scale, q.offset / scale)
