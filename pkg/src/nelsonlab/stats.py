"""Batch-means errors and log-domain means for heavy-tailed weights."""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp


def _batches(n: int, n_batches: int):
    return np.array_split(np.arange(n), min(n_batches, n))


def batch_means(values: np.ndarray, n_batches: int = 32):
    """Column means of ``values`` (``(M, k)``) with batch-means standard errors."""
    v = np.asarray(values, float)
    if v.ndim == 1:
        v = v[:, None]
    mean = v.mean(axis=0)
    parts = _batches(v.shape[0], n_batches)
    if len(parts) < 2:
        return mean, np.full_like(mean, np.inf)
    bm = np.stack([v[p].mean(axis=0) for p in parts])
    se = bm.std(axis=0, ddof=1) / np.sqrt(len(parts))
    return mean, se


def ess(logw: np.ndarray) -> float:
    """Kish effective sample size ``(sum w)^2 / sum w^2`` from log weights."""
    logw = np.asarray(logw, float)
    return float(np.exp(2 * logsumexp(logw) - logsumexp(2 * logw)))


def log_mean_exp(logw: np.ndarray, n_batches: int = 32):
    """``log mean exp(logw)`` with a batch-means standard error on the log scale.

    The error is the delta method applied to the batch means of ``exp(logw)``,
    evaluated relative to the overall mean so nothing overflows.
    """
    logw = np.asarray(logw, float)
    M = logw.size
    lm = float(logsumexp(logw) - np.log(M))
    parts = _batches(M, n_batches)
    if len(parts) < 2:
        return lm, np.inf
    rel = np.array([np.exp(logsumexp(logw[p]) - np.log(p.size) - lm) for p in parts])
    return lm, float(rel.std(ddof=1) / np.sqrt(len(parts)))


def weighted_mean(logw: np.ndarray, values: np.ndarray, n_batches: int = 32):
    """Self-normalized ``sum w v / sum w`` with a batch-means (ratio) standard error."""
    logw = np.asarray(logw, float)
    v = np.asarray(values, float)
    w = np.exp(logw - logw.max())
    est = float(np.sum(w * v) / np.sum(w))
    parts = _batches(logw.size, n_batches)
    # linearized ratio estimator: residuals w (v - est) normalized by mean w
    r = w * (v - est) / w.mean()
    br = np.array([r[p].mean() for p in parts])
    return est, float(br.std(ddof=1) / np.sqrt(len(parts)))
