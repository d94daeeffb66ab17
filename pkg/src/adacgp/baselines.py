"""Sparse adaptive VAR baseline: one coefficient matrix per lag, no graph-filter structure."""
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cgp import DivergenceError
from .control import LambdaMaxTracker, adaptive_step_size
from .core import RecursiveStats, update_recursive_stats
from .graphs import GraphShiftOperator, ParameterError
from .metrics import nmse_prediction

VAR_MODES = ("lms", "rls")


@dataclass
class AdaptiveVarState:
    """``coeffs`` is ``N x NP`` (lag blocks side by side).

    ``mode="lms"`` steps along the instantaneous error gradient and only keeps
    the input correlation ``R`` (for the step size), so one update costs
    ``O(N^2 P^2)``.  ``mode="rls"`` steps along the full forgetting-factor
    least-squares gradient ``coeffs R - Pxy`` at ``O(N^3 P^2)``.
    """

    coeffs: np.ndarray
    stats: RecursiveStats
    sparsity_weight: float = 0.0
    lam: float = 0.99
    mode: str = "lms"

    @classmethod
    def zeros(cls, n, P, sparsity_weight=0.0, lam=0.99, mode="lms"):
        if mode not in VAR_MODES:
            raise ParameterError(f"mode must be one of {VAR_MODES}, got {mode!r}")
        if sparsity_weight < 0:
            raise ParameterError("sparsity weight must be non-negative")
        return cls(np.zeros((n, n * P)), RecursiveStats.zeros(n, P, lam), float(sparsity_weight), float(lam), mode)

    @property
    def n(self):
        return self.coeffs.shape[0]

    @property
    def P(self):
        return self.coeffs.shape[1] // self.coeffs.shape[0]


def update_adaptive_var(state, x_t, x_window, step, backend=None):
    """Gradient step then group soft-thresholding of each ``(i, j)`` lag vector (in place)."""
    if not step > 0:
        raise ParameterError(f"step must be positive, got {step}")
    k = _kernels.get_backend(backend)
    x_t = np.ascontiguousarray(x_t, dtype=float)
    x_window = np.ascontiguousarray(x_window, dtype=float)
    if state.mode == "rls":
        update_recursive_stats(state.stats, x_t, x_window, backend=backend)
        grad = state.coeffs @ state.stats.R - state.stats.Pxy
        state.coeffs -= step * grad
    else:
        k.rank1_update(state.stats.R, state.stats.lam, x_window, x_window)
        e = x_t - state.coeffs @ x_window
        k.rank1_update(state.coeffs, 1.0, step * e, x_window)
    if state.sparsity_weight > 0:
        k.group_soft_threshold(state.coeffs, state.P, step * state.sparsity_weight)
    if not np.all(np.isfinite(state.coeffs)):
        raise DivergenceError("adaptive VAR coefficients diverged")
    return state


def var_causality_to_gso(coeffs, P, tol=0.0):
    """Edge weight = l2 norm of the lag coefficients of ``(i, j)``, kept where any lag exceeds ``tol``."""
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[0]
    if coeffs.shape != (n, n * P):
        raise ParameterError(f"expected {n}x{n * P} coefficients, got {coeffs.shape}")
    groups = coeffs.reshape(n, P, n)
    causal = np.any(np.abs(groups) > tol, axis=1)
    return GraphShiftOperator(np.where(causal, np.sqrt(np.sum(groups * groups, axis=1)), 0.0))


class AdaptiveVar:
    """Streaming driver around :func:`update_adaptive_var` with the same
    ``step``/``W`` surface as :class:`~adacgp.core.AdaCGP`."""

    def __init__(self, n, P=3, sparsity_weight=0.01, lam=0.99, mode="lms", step_size=None,
                 epsilon=1e-8, tol=0.0, backend=None):
        self.state = AdaptiveVarState.zeros(int(n), int(P), sparsity_weight, lam, mode)
        self.hist = np.zeros((int(P), int(n)))
        self.step_size = step_size
        self.epsilon = epsilon
        self.tol = tol
        self.backend = backend
        self.tracker = LambdaMaxTracker()
        self.t = 0
        self.switch_step = None
        self.terminal_step = None

    @property
    def W(self):
        return var_causality_to_gso(self.state.coeffs, self.state.P, self.tol).weights

    @property
    def h(self):
        return np.zeros(0)

    def step(self, x):
        x = np.ascontiguousarray(x, dtype=float)
        self.t += 1
        xw = self.hist.ravel()
        pred = self.state.coeffs @ xw
        nmse = nmse_prediction(x, pred) if float(x @ x) > 0 else math.nan
        if self.step_size is None:
            # R still holds the statistics up to the previous sample
            step = adaptive_step_size(self.state.stats.R, xw, self.epsilon, tracker=self.tracker, cap=True)
        else:
            step = float(self.step_size)
        update_adaptive_var(self.state, x, xw, step, backend=self.backend)
        self.hist[1:] = self.hist[:-1]
        self.hist[0] = x
        return nmse, math.nan
