"""Prediction/GSO errors, edge classification and stability analytics."""
from dataclasses import asdict, dataclass

import numpy as np


def _arr(W):
    return np.asarray(getattr(W, "weights", W), dtype=float)


def nmse_prediction(x_t, prediction):
    x_t = np.asarray(x_t, dtype=float)
    denom = float(x_t @ x_t)
    if denom == 0.0:
        raise ValueError("NMSE undefined for an all-zero target")
    r = x_t - np.asarray(prediction, dtype=float)
    return float(r @ r) / denom


def nmse_gso(W_true, W_est):
    W_true, W_est = _arr(W_true), _arr(W_est)
    if W_true.shape != W_est.shape:
        raise ValueError(f"shape mismatch {W_true.shape} vs {W_est.shape}")
    denom = float(np.sum(W_true * W_true))
    if denom == 0.0:
        raise ValueError("NMSE undefined for an all-zero true GSO")
    d = W_true - W_est
    return float(np.sum(d * d)) / denom


@dataclass
class EdgeClassificationReport:
    precision: float
    recall: float
    f1: float
    p_miss: float
    p_false_alarm: float
    true_nnz: int
    est_nnz: int

    def to_dict(self):
        return asdict(self)


def _ratio(a, b, empty):
    return a / b if b else empty


def classify_edges(W_true, W_est, tol=0.0):
    """Confusion rates of the off-diagonal support of ``W_est`` (``|w| > tol``) against the truth."""
    W_true, W_est = _arr(W_true), _arr(W_est)
    if W_true.shape != W_est.shape:
        raise ValueError(f"shape mismatch {W_true.shape} vs {W_est.shape}")
    off = ~np.eye(W_true.shape[0], dtype=bool)
    truth = (W_true != 0)[off]
    est = (np.abs(W_est) > tol)[off]
    tp = int(np.count_nonzero(truth & est))
    fp = int(np.count_nonzero(~truth & est))
    fn = int(np.count_nonzero(truth & ~est))
    tn = int(np.count_nonzero(~truth & ~est))
    precision = _ratio(tp, tp + fp, 1.0 if fn == 0 else 0.0)
    recall = _ratio(tp, tp + fn, 1.0)
    f1 = _ratio(2 * precision * recall, precision + recall, 0.0)
    return EdgeClassificationReport(
        precision=precision,
        recall=recall,
        f1=f1,
        p_miss=1.0 - recall,
        p_false_alarm=_ratio(fp, fp + tn, 0.0),
        true_nnz=tp + fn,
        est_nnz=tp + fp,
    )


def out_in_degree(W, node):
    """Out-strength minus in-strength of ``node``."""
    W = _arr(W)
    n = W.shape[0]
    if not 0 <= node < n:
        raise IndexError(f"node {node} out of range for n={n}")
    return float(W[node, :].sum() - W[:, node].sum())


def out_in_degrees(W):
    W = _arr(W)
    return W.sum(axis=1) - W.sum(axis=0)


def gso_lag_stability(snapshots, lag):
    """Frobenius norms ``||W_t - W_{t-lag}||`` over all valid ``t``."""
    snaps = np.asarray([_arr(s) for s in snapshots])
    lag = int(lag)
    if lag < 1:
        raise ValueError("lag must be positive")
    if lag >= len(snaps):
        raise ValueError(f"lag {lag} needs more than {len(snaps)} snapshots")
    diff = snaps[lag:] - snaps[:-lag]
    return np.sqrt(np.sum(diff * diff, axis=(1, 2)))
