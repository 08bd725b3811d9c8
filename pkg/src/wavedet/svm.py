"""Soft-margin SVM trained by SMO with a separate penalty for each class.

The dual problem solved is

    max_a  sum(a) - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t.   sum_i a_i y_i = 0,   0 <= a_i <= C_i

with ``C_i = c_plus`` for ``y_i = +1`` and ``C_i = c_minus`` for ``y_i = -1``.
Working pairs are chosen as the maximal violating pair.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _jsonio
from .errors import ParameterError, TrainingError

log = logging.getLogger(__name__)

MODEL_SCHEMA = "wavedet-svm/1"
_TAU = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "linear"
    degree: int = 2
    offset: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "poly"):
            raise ParameterError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "poly":
            if int(self.degree) != self.degree or self.degree < 1:
                raise ParameterError(f"poly degree must be an integer >= 1, got {self.degree}")
            if not self.offset > 0:
                raise ParameterError(f"inhomogeneous kernel needs offset > 0, got {self.offset}")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls("linear")

    @classmethod
    def poly(cls, degree: int = 2, offset: float = 1.0) -> "KernelSpec":
        return cls("poly", degree, offset)

    def gram(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Kernel matrix between the rows of ``a`` and ``b``."""
        g = np.asarray(a, dtype=float) @ np.asarray(b, dtype=float).T
        if self.kind == "poly":
            g = (g + self.offset) ** self.degree
        return g

    def to_dict(self) -> dict:
        if self.kind == "linear":
            return {"kind": "linear"}
        return {"kind": "poly", "degree": int(self.degree), "offset": float(self.offset)}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(d["kind"], int(d.get("degree", 2)), float(d.get("offset", 1.0)))


@dataclass(frozen=True)
class TrainConfig:
    c_plus: float = 1.0
    c_minus: float = 4.0
    kkt_tol: float = 1e-3
    max_passes: int = 10_000

    def __post_init__(self):
        if not (self.c_plus > 0 and self.c_minus > 0):
            raise ParameterError(f"penalties must be positive, got C+={self.c_plus}, C-={self.c_minus}")
        if not self.kkt_tol > 0:
            raise ParameterError(f"kkt_tol must be positive, got {self.kkt_tol}")
        if self.max_passes < 1:
            raise ParameterError(f"max_passes must be >= 1, got {self.max_passes}")

    def swapped(self) -> "TrainConfig":
        return TrainConfig(self.c_minus, self.c_plus, self.kkt_tol, self.max_passes)

    def to_dict(self) -> dict:
        return {"c_plus": self.c_plus, "c_minus": self.c_minus,
                "kkt_tol": self.kkt_tol, "max_passes": self.max_passes}


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    coefficients: np.ndarray
    bias: float
    kernel: KernelSpec
    feature_dim: int
    c_plus: float = float("inf")
    c_minus: float = float("inf")
    info: dict = field(default_factory=dict)

    @property
    def n_support(self) -> int:
        return len(self.coefficients)

    @property
    def alphas(self) -> np.ndarray:
        return np.abs(self.coefficients)

    def weights(self) -> np.ndarray:
        """Explicit primal weight vector; only defined for the linear kernel."""
        if self.kernel.kind != "linear":
            raise ParameterError("explicit weights exist only for the linear kernel")
        if self.n_support == 0:
            return np.zeros(self.feature_dim)
        return self.coefficients @ self.support_vectors

    def decision_values(self, x) -> np.ndarray:
        """Vectorised :func:`decision_value` over the rows of ``x``."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.feature_dim:
            raise ParameterError(f"expected {self.feature_dim} features, got {x.shape[-1]}")
        flat = x.reshape(-1, self.feature_dim)
        if self.n_support == 0:
            out = np.full(len(flat), self.bias)
        elif self.kernel.kind == "linear":
            out = flat @ self.weights() + self.bias
        else:
            out = self.kernel.gram(flat, self.support_vectors) @ self.coefficients + self.bias
        return out.reshape(x.shape[:-1])

    def check_constraints(self, tol: float = 1e-6) -> None:
        pos = self.coefficients > 0
        if np.any(self.coefficients[pos] > self.c_plus * (1 + 1e-12)):
            raise TrainingError("box constraint violated for the +1 class")
        if np.any(-self.coefficients[~pos] > self.c_minus * (1 + 1e-12)):
            raise TrainingError("box constraint violated for the -1 class")
        if abs(self.coefficients.sum()) > tol:
            raise TrainingError(f"sum(alpha*y) = {self.coefficients.sum():.3g}, expected 0")

    def to_dict(self) -> dict:
        return {
            "schema": MODEL_SCHEMA,
            "kernel": self.kernel.to_dict(),
            "feature_dim": int(self.feature_dim),
            "bias": float(self.bias),
            "c_plus": float(self.c_plus),
            "c_minus": float(self.c_minus),
            "coefficients": np.asarray(self.coefficients, dtype=float),
            "support_vectors": np.asarray(self.support_vectors, dtype=float).reshape(-1, self.feature_dim),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        if d.get("schema") != MODEL_SCHEMA:
            raise ParameterError(f"unsupported model schema {d.get('schema')!r}")
        dim = int(d["feature_dim"])
        return cls(
            support_vectors=np.asarray(d["support_vectors"], dtype=float).reshape(-1, dim),
            coefficients=np.asarray(d["coefficients"], dtype=float),
            bias=float(d["bias"]),
            kernel=KernelSpec.from_dict(d["kernel"]),
            feature_dim=dim,
            c_plus=float(d.get("c_plus", np.inf)),
            c_minus=float(d.get("c_minus", np.inf)),
        )

    def save(self, path) -> None:
        Path(path).write_text(_jsonio.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SvmModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ParameterError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(spec.gram(x[None, :], y[None, :])[0, 0])


class _KernelColumns:
    """Lazily computed, cached columns of the Gram matrix."""

    def __init__(self, x: np.ndarray, kernel: KernelSpec, precompute_limit: int = 3000):
        self.x = x
        self.kernel = kernel
        n = len(x)
        if n <= precompute_limit:
            self.full = kernel.gram(x, x)
            self.diag = np.diag(self.full).copy()
        else:
            self.full = None
            self.cache: dict = {}
            sq = np.einsum("ij,ij->i", x, x)
            self.diag = sq if kernel.kind == "linear" else (sq + kernel.offset) ** kernel.degree

    def __getitem__(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        col = self.cache.get(i)
        if col is None:
            col = self.kernel.gram(self.x, self.x[i:i + 1])[:, 0]
            self.cache[i] = col
        return col


def smo_solve(x: np.ndarray, y: np.ndarray, cfg: TrainConfig, kernel: KernelSpec):
    """Solve the dual; returns ``(alpha, bias, iterations, gap)``."""
    n = len(y)
    cols = _KernelColumns(x, kernel)
    c = np.where(y > 0, cfg.c_plus, cfg.c_minus)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a'Qa - e'a
    max_iter = cfg.max_passes * max(n, 1)
    gap = np.inf
    it = 0
    while it < max_iter:
        score = -y * grad
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < c)) | ((y > 0) & (alpha > 0))
        s_up = np.where(up, score, -np.inf)
        s_low = np.where(low, score, np.inf)
        i = int(np.argmax(s_up))
        j = int(np.argmin(s_low))
        gap = s_up[i] - s_low[j]
        if gap < cfg.kkt_tol:
            break
        ki, kj = cols[i], cols[j]
        eta = max(cols.diag[i] + cols.diag[j] - 2 * ki[j], _TAU)
        # move a_i by +y_i t and a_j by -y_j t; slope along t is -gap
        t = gap / eta
        t = min(t, c[i] - alpha[i] if y[i] > 0 else alpha[i])
        t = min(t, alpha[j] if y[j] > 0 else c[j] - alpha[j])
        di, dj = y[i] * t, -y[j] * t
        alpha[i] += di
        alpha[j] += dj
        # snap to the box to keep the active sets exact
        for k in (i, j):
            if alpha[k] < 1e-14 * c[k]:
                alpha[k] = 0.0
            elif alpha[k] > c[k] * (1 - 1e-14):
                alpha[k] = c[k]
        grad += y * (ki * (y[i] * di) + kj * (y[j] * dj))
        it += 1
    else:
        log.warning("SMO stopped after %d iterations with KKT gap %.3g", it, gap)

    score = -y * grad
    free = (alpha > 0) & (alpha < c)
    if np.any(free):
        bias = float(np.mean(score[free]))
    else:
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < c)) | ((y > 0) & (alpha > 0))
        hi = score[up].max() if np.any(up) else score[low].min()
        lo = score[low].min() if np.any(low) else hi
        bias = float((hi + lo) / 2)
    return alpha, bias, it, float(gap)


def train(samples, labels, cfg: TrainConfig | None = None, kernel: KernelSpec | None = None,
          seed: int | None = None) -> SvmModel:
    """Train a two-class SVM.

    ``seed`` is accepted for interface symmetry; pair selection is
    deterministic, so it has no effect on the result.
    """
    cfg = cfg or TrainConfig()
    kernel = kernel or KernelSpec.linear()
    x = np.asarray(samples, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or len(x) != len(y):
        raise ParameterError(f"samples must be (n, d) with n == len(labels); got {x.shape} and {y.shape}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("samples contain non-finite values")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ParameterError("labels must be +1 or -1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise TrainingError("training data must contain both classes")
    alpha, bias, it, gap = smo_solve(x, y, cfg, kernel)
    sv = alpha > 0
    model = SvmModel(
        support_vectors=x[sv].copy(),
        coefficients=(alpha * y)[sv],
        bias=bias,
        kernel=kernel,
        feature_dim=x.shape[1],
        c_plus=cfg.c_plus,
        c_minus=cfg.c_minus,
        info={"iterations": it, "kkt_gap": gap, "n_samples": len(y)},
    )
    log.debug("trained %s SVM: %d samples, %d SVs, %d iterations, gap %.2e",
              kernel.kind, len(y), model.n_support, it, gap)
    return model


def decision_value(model: SvmModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.feature_dim,):
        raise ParameterError(f"expected a vector of {model.feature_dim} features, got shape {x.shape}")
    return float(model.decision_values(x[None, :])[0])


def classify(model: SvmModel, x, threshold: float = 0.0) -> bool:
    return decision_value(model, x) > threshold


def dual_objective(samples, labels, alphas, kernel: KernelSpec) -> float:
    x = np.asarray(samples, dtype=float)
    y = np.asarray(labels, dtype=float)
    a = np.asarray(alphas, dtype=float)
    if not (len(x) == len(y) == len(a)):
        raise ParameterError(f"size mismatch: {len(x)} samples, {len(y)} labels, {len(a)} alphas")
    if len(a) == 0:
        return 0.0
    ay = a * y
    return float(a.sum() - 0.5 * ay @ kernel.gram(x, x) @ ay)


def model_dual_objective(model: SvmModel) -> float:
    """Dual objective of a trained model; non-support vectors contribute nothing."""
    if model.n_support == 0:
        return 0.0
    c = model.coefficients
    return float(np.abs(c).sum() - 0.5 * c @ model.kernel.gram(model.support_vectors, model.support_vectors) @ c)
