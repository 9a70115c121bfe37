"""Loss-based test metrics: ZOL, FOL (first-order stationarity) and Gini.

FOL measures how far a test case ``x_t`` is from a local maximum of the
loss inside the epsilon-ball around its seed ``x_0``::

    c(x_t) = max_{x in ball} <x - x_t, g>,   g = grad_x J(x_t, y)

which has the closed forms

    Linf:  eps * ||g||_1 - <x_t - x_0, g>
    L2:    eps * ||g||_2

Smaller values mean better convergence (a stronger adversarial example).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .errors import ArgumentError, ConfigError
from .suite import METRIC_FOL_L2, METRIC_FOL_LINF, TestSuite

BALL_TOL = 1e-6


@dataclass(frozen=True)
class MetricRecord:
    zol: float
    fol: float
    gini: float
    norm: str
    epsilon: float


def zol(model: nn.MlpModel, x_t, y):
    """Loss of the test case against its seed's ground-truth label."""
    return nn.loss(model, x_t, y)


def fol_l2_from_grad(g, epsilon: float):
    g = np.asarray(g, dtype=np.float64)
    return epsilon * np.linalg.norm(g, axis=-1)


def fol_linf_from_grad(g, x_t, x_0, epsilon: float):
    g = np.asarray(g, dtype=np.float64)
    disp = np.asarray(x_t, dtype=np.float64) - np.asarray(x_0, dtype=np.float64)
    return epsilon * np.abs(g).sum(axis=-1) - (disp * g).sum(axis=-1)


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


def fol_l2(model: nn.MlpModel, x_t, y, epsilon: float):
    if not epsilon > 0:
        raise ConfigError("epsilon must be > 0")
    return _scalar(fol_l2_from_grad(nn.input_gradient64(model, x_t, y), epsilon))


def fol_linf(model: nn.MlpModel, x_t, x_0, y, epsilon: float):
    if not epsilon > 0:
        raise ConfigError("epsilon must be > 0")
    x_t = np.asarray(x_t)
    x_0 = np.asarray(x_0)
    if x_t.shape != x_0.shape:
        raise ArgumentError(f"x_t shape {x_t.shape} != x_0 shape {x_0.shape}")
    drift = np.abs(x_t.astype(np.float64) - x_0).max() if x_t.size else 0.0
    if drift > epsilon + BALL_TOL:
        raise ArgumentError(f"test case lies {drift:.6g} from its seed, outside the {epsilon} Linf ball")
    g = nn.input_gradient64(model, x_t, y)
    return _scalar(fol_linf_from_grad(g, x_t, x_0, epsilon))


def fol(model, x_t, x_0, y, epsilon, norm):
    if norm == "l2":
        return fol_l2(model, x_t, y, epsilon)
    if norm == "linf":
        if x_0 is None:
            raise ArgumentError("Linf FOL needs the seed x_0")
        return fol_linf(model, x_t, x_0, y, epsilon)
    raise ConfigError(f"unknown norm {norm!r}")


def gini(probs):
    """DeepGini impurity ``1 - sum p_i^2``."""
    p = np.asarray(probs, dtype=np.float64)
    return _scalar(1.0 - (p * p).sum(axis=-1))


def metric_record(model, x_t, x_0, y, epsilon, norm) -> MetricRecord:
    p = nn._softmax64(nn.forward64(model, x_t))
    return MetricRecord(
        zol=float(nn.cross_entropy(p, y)),
        fol=float(fol(model, x_t, x_0, y, epsilon, norm)),
        gini=float(gini(p)),
        norm=norm,
        epsilon=epsilon,
    )


def score_suite(model: nn.MlpModel, suite: TestSuite, norm: str = "l2", epsilon: float | None = None,
                chunk: int = 2048) -> TestSuite:
    """Attach zol, fol (in ``norm``), gini and the model's prediction to every case.

    The suite keeps its own ball (``suite.norm``/``suite.epsilon``); only
    ``metric_variant`` records which FOL form was used.
    """
    if norm not in ("l2", "linf"):
        raise ConfigError(f"unknown norm {norm!r}")
    eps = suite.epsilon if epsilon is None else epsilon
    variant = METRIC_FOL_L2 if norm == "l2" else METRIC_FOL_LINF
    n = len(suite)
    if n == 0:
        return replace(suite, metric_variant=variant)
    if norm == "linf":
        drift = np.abs(suite.x_t.astype(np.float64) - suite.x_0).max(axis=1)
        if np.any(drift > eps + BALL_TOL):
            raise ArgumentError("suite contains cases outside the Linf ball of their seeds")
    y = suite.ground_truth.astype(np.int64)
    fol_v = np.empty(n)
    zol_v = np.empty(n)
    gini_v = np.empty(n)
    pred = np.empty(n, np.int64)
    for s in range(0, n, chunk):
        sl = slice(s, s + chunk)
        xt = suite.x_t[sl]
        logits = nn.forward64(model, xt)
        p = nn._softmax64(logits)
        pred[sl] = np.argmax(logits, axis=1)
        zol_v[sl] = nn.cross_entropy(p, y[sl])
        gini_v[sl] = 1.0 - (p * p).sum(axis=1)
        g = nn.input_gradient64(model, xt, y[sl])
        if norm == "l2":
            fol_v[sl] = fol_l2_from_grad(g, eps)
        else:
            fol_v[sl] = fol_linf_from_grad(g, xt, suite.x_0[sl], eps)
    return replace(suite, predicted=pred, fol=fol_v, zol=zol_v, gini=gini_v, metric_variant=variant)


def summarize(suite: TestSuite) -> dict:
    suite.require_scored()
    if len(suite) == 0:
        return {"count": 0}
    return {
        "count": len(suite),
        "mean_fol": float(np.mean(suite.fol.astype(np.float64))),
        "median_fol": float(np.median(suite.fol)),
        "mean_zol": float(np.mean(suite.zol.astype(np.float64))),
        "mean_gini": float(np.mean(suite.gini.astype(np.float64))),
        "misclassified": float(np.mean(suite.predicted != suite.ground_truth)),
    }
