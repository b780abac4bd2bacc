"""Distribution normalization and the weighted cross-entropy score.

POI vectors and the travel cost are compared on a common footing: the K
counts and the scalar cost are concatenated and pushed through a softmax, and
two such distributions are scored with a category-weighted cross-entropy

    CE(p, q) = -( sum_k w_k * p_k * log(w_k * q_k) + a * p_c * log(a * q_c) )

with natural logs, the weights sitting inside the log, and q floored at
1e-12 before the log. With unit weights this is the plain cross-entropy, so
the minimum over q for fixed p is at q = p.
"""

from dataclasses import dataclass

import numpy as np

Q_FLOOR = 1e-12


@dataclass
class LossWeights:
    """Per-category weights plus the travel-cost weight ``alpha``."""

    w: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 1:
            raise ValueError("w must be a 1-D array")
        if not np.all(np.isfinite(self.w)) or (self.w <= 0).any():
            raise ValueError("category weights must be positive and finite")
        if not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")

    @classmethod
    def unit(cls, n_categories: int, alpha: float = 1.0) -> "LossWeights":
        return cls(w=np.ones(n_categories), alpha=alpha)

    @property
    def full(self) -> np.ndarray:
        """Weights over the K+1 concatenated entries."""
        return np.append(self.w, self.alpha)


def softmax(x: np.ndarray) -> np.ndarray:
    """Numerically stable softmax of a 1-D vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("softmax expects a 1-D vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("softmax input must be finite")
    z = np.exp(x - x.max())
    return z / z.sum()


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax of a 2-D array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("softmax_rows expects a 2-D array")
    z = np.exp(x - x.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def normalize(u: np.ndarray, cost: float) -> np.ndarray:
    """Softmax over the K+1 vector [u_1 .. u_K, cost]."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 1:
        raise ValueError("u must be a 1-D vector")
    if not (np.isfinite(cost)):
        raise ValueError(f"cost must be finite, got {cost}")
    return softmax(np.append(u, float(cost)))


def weighted_cross_entropy(p: np.ndarray, q: np.ndarray, weights: np.ndarray) -> float:
    """CE with weights inside the log; p is fixed, q is the candidate."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if p.shape != q.shape or p.shape != weights.shape:
        raise ValueError(
            f"shape mismatch: p {p.shape}, q {q.shape}, weights {weights.shape}"
        )
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
        raise ValueError("cross-entropy inputs must be finite")
    q_safe = np.maximum(q, Q_FLOOR)
    return float(-np.sum(weights * p * np.log(weights * q_safe)))


def combined_cross_entropy(
    p_full: np.ndarray, q_full: np.ndarray, weights: LossWeights
) -> float:
    """Weighted CE over K+1 normalized entries (K categories + cost)."""
    full = weights.full
    if p_full.shape[0] != full.shape[0]:
        raise ValueError(
            f"expected {full.shape[0]} entries (K+1), got {p_full.shape[0]}"
        )
    return weighted_cross_entropy(p_full, q_full, full)
