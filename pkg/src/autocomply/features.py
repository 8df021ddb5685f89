"""Feature standardization and PCA dimensionality reduction.

Raw transaction features (128-dim by default) are standardized per column
and projected onto the top-k eigenvectors (k = 64 by default, 85 exposed
as an alternative) of the sample covariance. The eigendecomposition is a
cyclic Jacobi sweep: deterministic, exact for the symmetric matrices we
see, and plenty fast at d <= 256.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

DEFAULT_TARGET_DIM = 64
ALT_TARGET_DIM = 85  # alternative reduction width kept configurable


class InsufficientData(Exception):
    pass


class DimensionMismatch(Exception):
    pass


class RankDeficientWarning(UserWarning):
    """Covariance had zero eigenvalues among the kept components."""


@dataclass
class Standardizer:
    means: np.ndarray
    stds: np.ndarray  # population standard deviation
    constant_columns: np.ndarray = field(default=None)  # bool mask, std == 0

    def __post_init__(self):
        if self.constant_columns is None:
            self.constant_columns = self.stds == 0.0

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.means.shape[0]:
            raise DimensionMismatch(f"expected {self.means.shape[0]} columns, got {x.shape[-1]}")
        denom = np.where(self.constant_columns, 1.0, self.stds)
        return (x - self.means) / denom


def fit_standardizer(data: np.ndarray) -> Standardizer:
    """Per-column mean and population std; columns with std 0 are flagged constant."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise InsufficientData("need at least 2 rows to fit a standardizer")
    means = data.mean(axis=0)
    stds = np.sqrt(((data - means) ** 2).mean(axis=0))
    return Standardizer(means=means, stds=stds)


def jacobi_eigh(sym: np.ndarray, tol: float = 1e-12, max_sweeps: int = 64):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues desc, eigenvectors as rows) with a deterministic
    sign convention: each vector's first entry of magnitude > 1e-12 is
    made non-negative.
    """
    a = np.array(sym, dtype=np.float64, copy=True)
    d = a.shape[0]
    if a.shape != (d, d):
        raise DimensionMismatch("jacobi_eigh needs a square matrix")
    v = np.eye(d)
    scale = max(np.abs(a).max(), 1.0)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= 1e-30 * scale:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # rotate rows/cols p and q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    eigvals = np.diag(a).copy()
    # sort descending; ties broken by original index for determinism
    order = np.lexsort((np.arange(d), -eigvals))
    eigvals = eigvals[order]
    vectors = v[:, order].T  # rows are eigenvectors
    for i in range(d):
        nz = np.nonzero(np.abs(vectors[i]) > 1e-12)[0]
        if nz.size and vectors[i, nz[0]] < 0:
            vectors[i] = -vectors[i]
    return eigvals, vectors


@dataclass
class PcaModel:
    components: np.ndarray  # k x d, rows orthonormal
    explained_variance: np.ndarray  # length k, non-increasing
    total_variance: float  # trace of the covariance, for coverage ratios

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]

    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance

    def coverage(self) -> float:
        """Cumulative share of variance retained by the kept components."""
        return float(self.explained_variance_ratio().sum())


def fit_pca(data: np.ndarray, k: int) -> PcaModel:
    """Top-k eigenvectors of the sample covariance via cyclic Jacobi.

    Expects standardized input. Eigenvalues come out sorted descending and
    each component's leading nonzero entry is non-negative, so two fits on
    the same data are bit-identical.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise DimensionMismatch("fit_pca expects an n x d matrix")
    n, d = data.shape
    if not (1 <= k <= min(n - 1, d)):
        raise ValueError(f"k={k} outside [1, min(n-1, d)] = [1, {min(n - 1, d)}]")
    centered = data - data.mean(axis=0)
    cov = (centered.T @ centered) / n
    eigvals, vectors = jacobi_eigh(cov)
    eigvals = np.maximum(eigvals, 0.0)  # clamp tiny negative round-off
    kept = eigvals[:k]
    if np.any(kept == 0.0):
        warnings.warn("covariance is rank deficient within the kept components",
                      RankDeficientWarning)
    return PcaModel(components=vectors[:k].copy(),
                    explained_variance=kept.copy(),
                    total_variance=float(np.trace(cov)))


def project(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """components . x for a single vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise DimensionMismatch(f"expected {model.input_dim} features, got {x.shape[-1]}")
    return x @ model.components.T


@dataclass
class FeaturePipeline:
    """Standardize then project; the shape every scoring model consumes."""

    standardizer: Standardizer
    pca: PcaModel

    @property
    def input_dim(self) -> int:
        return self.standardizer.means.shape[0]

    @property
    def output_dim(self) -> int:
        return self.pca.k

    def transform(self, x: np.ndarray) -> np.ndarray:
        return project(self.pca, self.standardizer.transform(x))

    def to_json_dict(self) -> dict:
        return {
            "means": self.standardizer.means.tolist(),
            "stds": self.standardizer.stds.tolist(),
            "components": self.pca.components.tolist(),
            "explained_variance": self.pca.explained_variance.tolist(),
            "total_variance": self.pca.total_variance,
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json_dict(), f)

    @classmethod
    def from_json_dict(cls, d: dict) -> "FeaturePipeline":
        std = Standardizer(means=np.asarray(d["means"], dtype=np.float64),
                           stds=np.asarray(d["stds"], dtype=np.float64))
        comps = np.asarray(d["components"], dtype=np.float64)
        ev = np.asarray(d["explained_variance"], dtype=np.float64)
        total = float(d.get("total_variance", ev.sum()))
        return cls(standardizer=std,
                   pca=PcaModel(components=comps, explained_variance=ev, total_variance=total))

    @classmethod
    def load(cls, path: str) -> "FeaturePipeline":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json_dict(json.load(f))


def fit_pipeline(data: np.ndarray, k: int = DEFAULT_TARGET_DIM) -> FeaturePipeline:
    std = fit_standardizer(data)
    return FeaturePipeline(standardizer=std, pca=fit_pca(std.transform(data), k))
