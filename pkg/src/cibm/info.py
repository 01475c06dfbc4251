"""Mutual-information and entropy estimators.

``mi_xc`` and ``entropy_c`` are differentiable (they build diffcore graphs) and
are used inside the training losses. ``mi_plane`` and ``discrete_mi`` are
plain numpy and only used for logging and concept selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .errors import ConfigError, DimensionError, DomainError


@dataclass
class GaussBatch:
    """Per-row diagonal Gaussians over concept logits, plus one sample per row."""

    mu: dc.Node
    sigma: dc.Node
    c: dc.Node | None = None

    def __post_init__(self):
        self.mu = dc.as_node(self.mu)
        self.sigma = dc.as_node(self.sigma)
        if self.c is not None:
            self.c = dc.as_node(self.c)
        if self.mu.shape != self.sigma.shape or (self.c is not None and self.c.shape != self.mu.shape):
            raise DimensionError("GaussBatch fields must share a shape")
        if np.any(self.sigma.value <= 0):
            raise DomainError("sigma must be strictly positive")

    @property
    def size(self) -> int:
        return self.mu.shape[0]


@dataclass
class InfoPlanePoint:
    epoch: int
    I_xz: float
    I_zc: float
    I_xc: float
    I_cy: float

    @property
    def flagged(self) -> bool:
        return min(self.I_xz, self.I_zc, self.I_xc, self.I_cy) < 0.0


def gaussian_logpdf_diag(c, mu, sigma) -> dc.Node:
    return dc.gauss_logpdf_diag(dc.as_node(c), dc.as_node(mu), dc.as_node(sigma))


def mi_xc(batch: GaussBatch, marginal: GaussBatch) -> dc.Node:
    """Monte-Carlo estimate of I(X;C) in nats.

    For every batch row the sample c_i is scored under its own conditional and
    under the mixture of the M marginal conditionals:
    mean_i [log p(c_i|x_i) - logsumexp_j log p(c_i|x'_j) + log M].
    """
    m = marginal.size
    if m < 2:
        raise ConfigError("marginal batch needs at least 2 rows", key="mi_samples")
    if batch.c is None:
        raise ConfigError("batch has no samples c")
    cond = dc.gauss_logpdf_diag(batch.c, batch.mu, batch.sigma)
    pair = dc.gauss_logpdf_pairwise(batch.c, marginal.mu, marginal.sigma)
    log_marg = dc.add_scalar(dc.logsumexp_rows(pair), -np.log(m))
    return dc.mean(dc.sub(cond, log_marg))


def entropy_c(sigma) -> dc.Node:
    """Batch mean of sum_k log sigma_k; the constant K/2 (1 + log 2π) is left out."""
    sigma = dc.as_node(sigma)
    if np.any(sigma.value <= 0):
        raise DomainError("sigma must be strictly positive")
    if sigma.value.ndim != 2:
        raise DimensionError("entropy_c expects sigma [B×K]")
    b = sigma.shape[0]
    return dc.scale(dc.total(dc.log(sigma)), 1.0 / b)


# ---------------------------------------------------------------------------
# logging-only estimators


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a[:, None] if a.ndim == 1 else a


def _sq_dists(x: np.ndarray) -> np.ndarray:
    sq = (x * x).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * x @ x.T
    return np.maximum(d2, 0.0)


def median_bandwidth(x: np.ndarray, max_rows: int = 1000) -> float:
    """Median pairwise distance, rescaled to a per-dimension Scott-rule width.

    h = median_dist / sqrt(2 d) * N^(-1/(d+4)); the first factor turns the
    median distance into a per-coordinate scale.
    """
    x = _as_2d(x)
    n, d = x.shape
    sub = x[:max_rows]
    d2 = _sq_dists(sub)
    iu = np.triu_indices(len(sub), k=1)
    med = float(np.median(np.sqrt(d2[iu]))) if len(iu[0]) else 0.0
    if med <= 0:
        return 1.0
    return med / np.sqrt(2.0 * d) * n ** (-1.0 / (d + 4))


def _kde_loo_logdensity(x: np.ndarray, h: float, block: int = 512) -> np.ndarray:
    n, d = x.shape
    sq = (x * x).sum(axis=1)
    out = np.empty(n)
    for start in range(0, n, block):
        rows = slice(start, min(start + block, n))
        d2 = np.maximum(sq[rows, None] + sq[None, :] - 2.0 * x[rows] @ x.T, 0.0)
        logk = -d2 / (2.0 * h * h)
        idx = np.arange(rows.start, rows.stop)
        logk[idx - start, idx] = -np.inf
        out[rows] = dc._logsumexp_rows(logk)
    return out - np.log(n - 1) - d * np.log(h * np.sqrt(2.0 * np.pi))


def mi_plane(a_samples, b_samples, bandwidth: float | None = None) -> float:
    """Kernel plug-in estimate of I(A;B) in nats for information-plane logging.

    Conditionals and marginals are Gaussian kernel densities with a shared
    width h (leave-one-out), and the estimate is
    mean_i [log p(a_i, b_i) - log p(a_i) - log p(b_i)]. If b is constant the
    result is 0 exactly.
    """
    a = _as_2d(a_samples)
    b = _as_2d(b_samples)
    if a.shape[0] != b.shape[0]:
        raise DimensionError("a and b need the same number of rows")
    n = a.shape[0]
    if n < 16:
        raise ConfigError("mi_plane needs at least 16 samples")
    if np.all(b == b[0]) or np.all(a == a[0]):
        return 0.0
    joint = np.hstack([a, b])
    h = median_bandwidth(joint) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ConfigError("bandwidth must be positive", key="bandwidth")
    lj = _kde_loo_logdensity(joint, h)
    la = _kde_loo_logdensity(a, h)
    lb = _kde_loo_logdensity(b, h)
    return float(np.mean(lj - la - lb))


def discrete_mi(u, v) -> float:
    """Plug-in mutual information (nats) of two discrete sequences."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape or u.ndim != 1:
        raise DimensionError("discrete_mi expects two equal-length 1-d arrays")
    n = len(u)
    if n == 0:
        raise ConfigError("discrete_mi needs at least one sample")
    _, ui = np.unique(u, return_inverse=True)
    _, vi = np.unique(v, return_inverse=True)
    table = np.zeros((ui.max() + 1, vi.max() + 1))
    np.add.at(table, (ui, vi), 1.0)
    return mi_from_table(table / n)


def mi_from_table(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    p = p / p.sum()
    pu = p.sum(axis=1, keepdims=True)
    pv = p.sum(axis=0, keepdims=True)
    nz = p > 0
    val = float((p[nz] * np.log(p[nz] / (pu @ pv)[nz])).sum())
    return max(val, 0.0)
