"""Step sizes, sparsity-weight schedules and steady-state detection."""
import math
from dataclasses import dataclass

import numpy as np

ARMIJO_C = 1e-4
ARMIJO_RATIO = 0.5
ARMIJO_MAX_BACKTRACKS = 20
POWER_ITERATIONS = 8
FALLBACK_STEP = 1e-3


@dataclass
class SteadyStateDetector:
    """EMA-based plateau detector.

    Fires once the smoothed metric has gone ``patience`` consecutive updates
    without beating its best value by at least ``rel_improvement``.
    """

    alpha: float = 0.995
    patience: int = 500
    rel_improvement: float = 0.01
    ema: float = math.nan
    best: float = math.inf
    counter: int = 0
    steps: int = 0
    fired: bool = False

    def update(self, value):
        value = float(value)
        if not math.isfinite(value) or value < 0:
            raise ValueError(f"steady-state detector needs a finite non-negative metric, got {value}")
        if self.steps == 0:
            self.ema = value
        else:
            self.ema = self.alpha * self.ema + (1.0 - self.alpha) * value
        self.steps += 1
        if self.ema <= self.best * (1.0 - self.rel_improvement):
            self.best = self.ema
            self.counter = 0
        else:
            self.counter += 1
        self.fired = self.counter >= self.patience
        return self.fired

    def reset(self):
        self.ema, self.best = math.nan, math.inf
        self.counter = self.steps = 0
        self.fired = False


def steady_state_update(det, nmse):
    fired = det.update(nmse)
    return det, fired


class LambdaMaxTracker:
    """Largest eigenvalue of a symmetric PSD matrix via warm-started power iteration."""

    def __init__(self, n_iter=POWER_ITERATIONS):
        self.n_iter = int(n_iter)
        self._v = None

    def __call__(self, R):
        n = R.shape[0]
        v = self._v
        if v is None or v.shape[0] != n:
            v = np.ones(n) / math.sqrt(n)
        lam = 0.0
        for _ in range(self.n_iter):
            w = R @ v
            norm = np.linalg.norm(w)
            if norm == 0.0:
                # v in the null space (or R == 0); restart from a dense vector
                v = np.ones(n) / math.sqrt(n)
                w = R @ v
                norm = np.linalg.norm(w)
                if norm == 0.0:
                    self._v = v
                    return 0.0
            v = w / norm
        lam = float(v @ R @ v)
        self._v = v
        return lam


def adaptive_step_size(R, x_window, epsilon=1e-8, lam_max=None, tracker=None, fallback=FALLBACK_STEP,
                       cap=False):
    """``(2 / lambda_max(R)) / (||x_window||^2 + epsilon)``.

    ``lam_max`` may be supplied; otherwise it comes from ``tracker`` (power
    iteration) or, failing that, a dense symmetric eigensolver.  A vanishing
    ``R`` yields ``fallback``.  With ``cap=True`` the step is limited to
    ``1 / lambda_max(R)``, the stable limit of a gradient step on a quadratic
    with Hessian ``R``.
    """
    if lam_max is None:
        if tracker is not None:
            lam_max = tracker(R)
        else:
            lam_max = float(np.linalg.eigvalsh(R)[-1]) if R.size else 0.0
    if not lam_max > 0.0:
        return fallback
    x_window = np.asarray(x_window, dtype=float)
    step = 2.0 / lam_max / (float(x_window @ x_window) + epsilon)
    # a short window (||x||^2 < 2) would otherwise push the step past 1/lambda_max
    return min(step, 1.0 / lam_max) if cap else step


def armijo_step(objective, gradient, point, init_step=1.0, c=ARMIJO_C, ratio=ARMIJO_RATIO,
                max_backtracks=ARMIJO_MAX_BACKTRACKS, f0=None):
    """Backtracking line search along ``-gradient``.

    Returns ``(step, ok)``; ``ok`` is False when no step among
    ``init_step * ratio**k`` (k <= max_backtracks) gave sufficient decrease, in
    which case the smallest tried step is returned.
    """
    g2 = float(np.sum(gradient * gradient))
    if g2 == 0.0:
        return init_step, True
    if f0 is None:
        f0 = objective(point)
    step = init_step
    for _ in range(max_backtracks + 1):
        f = objective(point - step * gradient)
        if f <= f0 - c * step * g2:
            return step, True
        step *= ratio
    return step / ratio, False


def sparsity_schedule(pxy_block, q_block, gamma, mu_base):
    """``mu_base * max|P_p - gamma Q_p|``."""
    if q_block is None or gamma == 0:
        m = np.abs(pxy_block).max(initial=0.0)
    else:
        m = np.abs(pxy_block - gamma * q_block).max(initial=0.0)
    return float(mu_base) * float(m)


def h_sparsity_weight(Y, x, eta):
    """``eta * max|Y^T x|``."""
    return float(eta) * float(np.abs(Y.T @ x).max(initial=0.0))
