"""One-class SVM anomaly detector with a from-scratch dual solver.

Solves the nu-parameterized one-class dual
    minimize 1/2 a' K a   subject to  0 <= a_i <= 1/(nu*n),  sum a = 1
by pairwise coordinate updates on the most-violating pair, then scores
queries with  f(x) = sum_i a_i K(x_i, x) - rho. nu upper-bounds the
training outlier fraction and lower-bounds the support-vector fraction,
which is what makes the detector testable.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .domain import AnomalyFlag

DEFAULT_NU = 0.1


class BadNu(ValueError):
    pass


class NonFinite(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class KernelParams:
    """Gaussian kernel K(a,b) = exp(-gamma_kernel * ||a-b||^2)."""

    gamma_kernel: float

    def __post_init__(self):
        if not (self.gamma_kernel > 0):
            raise ValueError("gamma_kernel must be > 0")


def kernel_matrix(a: np.ndarray, b: np.ndarray, kernel: KernelParams) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-kernel.gamma_kernel * sq)


def median_heuristic_gamma(data: np.ndarray) -> float:
    """Default bandwidth: 1 / (dim * median pairwise squared distance)."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    n, k = data.shape
    if n < 2:
        return 1.0 / max(k, 1)
    sq = (
        np.sum(data * data, axis=1)[:, None]
        + np.sum(data * data, axis=1)[None, :]
        - 2.0 * (data @ data.T)
    )
    np.maximum(sq, 0.0, out=sq)
    pair = sq[np.triu_indices(n, k=1)]
    med = float(np.median(pair))
    if med <= 0.0:
        return 1.0 / max(k, 1)
    return 1.0 / (k * med)


@dataclass
class SvmModel:
    support_vectors: np.ndarray  # m x k
    alphas: np.ndarray  # length m, all > 0
    rho: float
    kernel: KernelParams
    nu: float

    def to_json_dict(self) -> dict:
        return {
            "support_vectors": self.support_vectors.tolist(),
            "alphas": self.alphas.tolist(),
            "rho": self.rho,
            "gamma_kernel": self.kernel.gamma_kernel,
            "nu": self.nu,
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json_dict(), f)

    @classmethod
    def from_json_dict(cls, d: dict) -> "SvmModel":
        return cls(
            support_vectors=np.asarray(d["support_vectors"], dtype=np.float64),
            alphas=np.asarray(d["alphas"], dtype=np.float64),
            rho=float(d["rho"]),
            kernel=KernelParams(gamma_kernel=float(d["gamma_kernel"])),
            nu=float(d["nu"]),
        )

    @classmethod
    def load(cls, path: str) -> "SvmModel":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json_dict(json.load(f))


def train(
    data: np.ndarray,
    nu: float = DEFAULT_NU,
    kernel: KernelParams | None = None,
    tol: float = 1e-6,
    max_iter: int | None = None,
) -> SvmModel:
    """Fit the one-class model on an n x k matrix.

    Working-set selection picks the most-violating pair with ties broken
    by lowest index, so training is bit-deterministic for fixed inputs.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if not np.isfinite(data).all():
        raise NonFinite("training data contains non-finite values")
    n = data.shape[0]
    if n < 1:
        raise BadNu("need at least one training point")
    if not (1.0 / n <= nu <= 1.0):
        raise BadNu(f"nu={nu} outside [1/n, 1] = [{1.0 / n}, 1]")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if kernel is None:
        kernel = KernelParams(gamma_kernel=median_heuristic_gamma(data))
    upper = 1.0 / (nu * n)
    if max_iter is None:
        max_iter = max(10_000, 200 * n)

    km = kernel_matrix(data, data, kernel)

    # feasible start: fill the box from the front until the mass sums to 1
    alpha = np.zeros(n)
    full = int(np.floor(nu * n))
    alpha[:full] = upper
    if full < n:
        alpha[full] = 1.0 - full * upper
    grad = km @ alpha

    bound_eps = 1e-12 * upper
    for _ in range(max_iter):
        can_down = alpha > bound_eps
        can_up = alpha < upper - bound_eps
        gi = np.where(can_down, grad, -np.inf)
        gj = np.where(can_up, grad, np.inf)
        i = int(np.argmax(gi))  # first maximum: lowest-index tie-break
        j = int(np.argmin(gj))
        violation = gi[i] - gj[j]
        if violation < tol:
            break
        denom = km[i, i] + km[j, j] - 2.0 * km[i, j]
        if denom > 1e-15:
            delta = violation / denom
        else:
            delta = np.inf  # identical points: move as much as the box allows
        delta = min(delta, alpha[i], upper - alpha[j])
        alpha[i] -= delta
        alpha[j] += delta
        grad += delta * (km[:, j] - km[:, i])
    else:
        warnings.warn(f"dual solver hit max_iter={max_iter} before tol={tol}",
                      ConvergenceWarning)

    sv_eps = 1e-9
    margin = (alpha > sv_eps) & (alpha < upper - sv_eps)
    if margin.any():
        rho = float(np.mean(grad[margin]))
    else:
        at_bound = alpha >= upper - sv_eps
        rho = float(np.max(grad[at_bound]))

    keep = alpha > sv_eps
    return SvmModel(
        support_vectors=data[keep].copy(),
        alphas=alpha[keep].copy(),
        rho=rho,
        kernel=kernel,
        nu=nu,
    )


def decision(model: SvmModel, x: np.ndarray) -> tuple[float, AnomalyFlag]:
    """Score one query: (sum_i a_i K(x_i, x) - rho, inlier iff score >= 0)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.support_vectors.shape[1]:
        raise DimensionMismatch(
            f"query has shape {x.shape}, model expects ({model.support_vectors.shape[1]},)"
        )
    score = float(decision_scores(model, x[None, :])[0])
    flag = AnomalyFlag.INLIER if score >= 0.0 else AnomalyFlag.OUTLIER
    return score, flag


def decision_scores(model: SvmModel, xs: np.ndarray) -> np.ndarray:
    """Vectorized scores for a batch of query rows."""
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[1] != model.support_vectors.shape[1]:
        raise DimensionMismatch(
            f"queries have {xs.shape[1]} features, model expects "
            f"{model.support_vectors.shape[1]}"
        )
    km = kernel_matrix(xs, model.support_vectors, model.kernel)
    return km @ model.alphas - model.rho
