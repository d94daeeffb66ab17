"""Online sparse GSO estimation with variable splitting (filter bank + GSO sub-problems,
support-restricted debiasing and adaptive filter-coefficient tracking)."""
import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum

import numpy as np

from . import _kernels
from .cgp import DIVERGENCE_LIMIT, DivergenceError, n_coeffs
from .control import (
    FALLBACK_STEP,
    LambdaMaxTracker,
    SteadyStateDetector,
    adaptive_step_size,
    armijo_step,
    h_sparsity_weight,
    sparsity_schedule,
)
from .graphs import ParameterError


class Path(str, Enum):
    P1 = "p1"
    P2 = "p2"


class DebiasMode(str, Enum):
    AFTER_STEADY_STATE = "debias"
    ALTERNATING = "alt-debias"
    NONE = "none"


class StepMode(str, Enum):
    ADAPTIVE = "adaptive"
    ARMIJO = "armijo"
    FIXED = "fixed"


class HMode(str, Enum):
    INSTANTANEOUS = "instantaneous"
    ACCUMULATED = "accumulated"


def parse_variant(variant):
    """``"p1-debias"``, ``"p2+alt-debias"``, ``"p1"`` ... -> ``(Path, DebiasMode)``."""
    text = str(variant).strip().lower().replace("+", "-").replace("_", "-").replace(" ", "")
    head, _, tail = text.partition("-")
    try:
        path = Path(head)
    except ValueError:
        raise ParameterError(f"unknown variant {variant!r}") from None
    tail = tail or "none"
    if tail in ("alt", "altdebias"):
        tail = "alt-debias"
    try:
        return path, DebiasMode(tail)
    except ValueError:
        raise ParameterError(f"unknown variant {variant!r}") from None


@dataclass
class EstimatorConfig:
    """Hyper-parameters of the online estimator.

    ``mu`` is one base sparsity weight per lag block (a scalar is broadcast).
    ``w_step``/``h_step`` are ``"armijo"`` or a fixed positive step.
    ``h_epsilon`` shapes the reweighted sparsity term on the coefficients,
    ``epsilon`` guards the adaptive step-size denominator.
    ``w_mu_mode="relative"`` scales the GSO sub-problem's sparsity weight by
    ``max|Psi_1|`` (its own critical value); ``"shared"`` reuses the filter-bank
    weight ``mu_{1,t}`` unchanged.
    """

    P: int = 3
    path: Path = Path.P1
    debias: DebiasMode = DebiasMode.AFTER_STEADY_STATE
    mu: object = 0.1
    eta: float = 0.01
    gamma: float = 1.0
    lam: float = 0.99
    epsilon: float = 1e-8
    h_epsilon: float = 1e-8
    step_mode: StepMode = StepMode.ADAPTIVE
    step_size: float = FALLBACK_STEP
    w_step: object = "armijo"
    w_mu_mode: str = "relative"
    h_step: object = "armijo"
    h_mode: HMode = HMode.ACCUMULATED
    mask: object = None
    power_iters: int = 8
    ema_alpha: float = 0.995
    patience: int = 500
    rel_improvement: float = 0.01
    stop_on_steady_state: bool = False
    snapshot_stride: int = 100
    keep_snapshots: bool = False
    validate: bool = False
    backend: object = None

    def __post_init__(self):
        self.P = int(self.P)
        if self.P < 1:
            raise ParameterError(f"P must be >= 1, got {self.P}")
        self.path = Path(self.path)
        self.debias = DebiasMode(self.debias)
        self.step_mode = StepMode(self.step_mode)
        self.h_mode = HMode(self.h_mode)
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        if mu.size == 1:
            mu = np.full(self.P, float(mu[0]))
        if mu.size != self.P:
            raise ParameterError(f"mu needs {self.P} entries, got {mu.size}")
        if np.any(mu < 0):
            raise ParameterError("mu entries must be non-negative")
        self.mu = mu
        if not 0.0 < self.lam <= 1.0:
            raise ParameterError(f"forgetting factor must lie in (0, 1], got {self.lam}")
        if self.gamma < 0:
            raise ParameterError("gamma must be non-negative")
        if self.epsilon <= 0 or self.h_epsilon <= 0:
            raise ParameterError("epsilon must be positive")
        for name in ("w_step", "h_step"):
            v = getattr(self, name)
            if v != "armijo" and not (isinstance(v, (int, float)) and v > 0):
                raise ParameterError(f"{name} must be 'armijo' or a positive number, got {v!r}")
        if self.w_mu_mode not in ("relative", "shared"):
            raise ParameterError(f"w_mu_mode must be 'relative' or 'shared', got {self.w_mu_mode!r}")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)

    @classmethod
    def from_variant(cls, variant, **kwargs):
        path, debias = parse_variant(variant)
        unknown = set(kwargs) - {f.name for f in fields(cls)}
        if unknown:
            raise ParameterError(f"unknown estimator option(s): {sorted(unknown)}")
        return cls(path=path, debias=debias, **kwargs)

    def with_(self, **changes):
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# state containers
# ---------------------------------------------------------------------------

def to_blocks(M, P):
    """``N x NP`` -> contiguous ``(P, N, N)`` stack of column blocks."""
    n = M.shape[0]
    return np.ascontiguousarray(M.reshape(n, P, n).transpose(1, 0, 2))


def from_blocks(B):
    P, n, _ = B.shape
    return np.ascontiguousarray(B.transpose(1, 0, 2).reshape(n, P * n))


@dataclass
class FilterBank:
    """Filter bank ``[Psi_1 ... Psi_P]`` held as non-negative parts ``pos - neg``."""

    pos: np.ndarray
    neg: np.ndarray

    @classmethod
    def zeros(cls, n, P):
        return cls(np.zeros((n, n * P)), np.zeros((n, n * P)))

    @classmethod
    def from_value(cls, value):
        value = np.asarray(value, dtype=float)
        return cls(np.maximum(value, 0.0), np.maximum(-value, 0.0))

    @property
    def n(self):
        return self.pos.shape[0]

    @property
    def P(self):
        return self.pos.shape[1] // self.pos.shape[0]

    def value(self):
        return self.pos - self.neg

    def block(self, p):
        """Lag-``p`` filter (1-based)."""
        n = self.n
        return self.value()[:, (p - 1) * n:p * n]

    def copy(self):
        return FilterBank(self.pos.copy(), self.neg.copy())


@dataclass
class SplitGSO:
    pos: np.ndarray
    neg: np.ndarray

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros((n, n)), np.zeros((n, n)))

    @classmethod
    def from_value(cls, value):
        value = np.asarray(value, dtype=float)
        return cls(np.maximum(value, 0.0), np.maximum(-value, 0.0))

    def value(self):
        return self.pos - self.neg

    def copy(self):
        return SplitGSO(self.pos.copy(), self.neg.copy())


@dataclass
class RecursiveStats:
    """Exponentially weighted correlations of lagged inputs (``R``), input/target
    cross-correlations (``Pxy``) and the coefficient-stage pair ``C``/``u``."""

    R: np.ndarray
    Pxy: np.ndarray
    lam: float
    C: np.ndarray = None
    u: np.ndarray = None

    @classmethod
    def zeros(cls, n, P, lam):
        M = n_coeffs(P)
        return cls(np.zeros((n * P, n * P)), np.zeros((n, n * P)), float(lam), np.zeros((M, M)), np.zeros(M))


def update_recursive_stats(stats, x_t, x_window, backend=None):
    """``R <- lam R + x_w x_w^T`` and ``Pxy <- lam Pxy + x_t x_w^T`` (in place)."""
    k = _kernels.get_backend(backend)
    x_t = np.ascontiguousarray(x_t, dtype=float)
    x_window = np.ascontiguousarray(x_window, dtype=float)
    if x_window.shape != (stats.R.shape[0],) or x_t.shape != (stats.Pxy.shape[0],):
        raise ParameterError(
            f"dimension mismatch: x_t {x_t.shape}, x_window {x_window.shape} for R {stats.R.shape}"
        )
    k.rank1_update(stats.R, stats.lam, x_window, x_window)
    k.rank1_update(stats.Pxy, stats.lam, x_t, x_window)
    return stats


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def commutator(A, B):
    A, B = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ParameterError(f"commutator needs equal square matrices, got {A.shape} and {B.shape}")
    return A @ B - B @ A


def psi_commutator_gradient(psi, P=None, backend=None):
    """Gradient of ``1/2 sum_{i<j} ||[Psi_i, Psi_j]||_F^2`` w.r.t. every block (``N x NP``)."""
    value = psi.value() if isinstance(psi, FilterBank) else np.asarray(psi, dtype=float)
    P = psi.P if isinstance(psi, FilterBank) else int(P)
    if P < 2:
        return np.zeros_like(value)
    k = _kernels.get_backend(backend)
    return from_blocks(k.psi_commutator_grad(to_blocks(value, P)))


def psi_gradient(psi_prev, stats, gamma=0.0, Q=None, mask=None):
    """``Psi_{t-1} R_t - (P_t - gamma Q_t)``; masked-out entries get zero gradient."""
    value = psi_prev.value() if isinstance(psi_prev, FilterBank) else np.asarray(psi_prev, dtype=float)
    G = value @ stats.R - stats.Pxy
    if Q is not None and gamma:
        G += gamma * Q
    if mask is not None:
        G *= _tile_mask(mask, G.shape[1] // G.shape[0])
    return G


def _tile_mask(mask, P):
    return np.tile(np.asarray(mask, dtype=bool), (1, P))


def update_psi_split(psi, G, mu_t, steps, mask=None, backend=None):
    """Projected gradient step on both non-negative parts (in place).

    ``mu_t`` and ``steps`` hold one sparsity weight / step size per lag block.
    """
    if not np.all(np.isfinite(G)):
        raise DivergenceError("non-finite filter-bank gradient")
    n, P = psi.n, psi.P
    k = _kernels.get_backend(backend)
    shrink = np.repeat(np.asarray(mu_t, dtype=float), n)
    step = np.repeat(np.asarray(steps, dtype=float), n)
    k.split_project(psi.pos, psi.neg, np.ascontiguousarray(G), shrink, step)
    if mask is not None:
        off = ~_tile_mask(mask, P)
        psi.pos[off] = 0.0
        psi.neg[off] = 0.0
    return psi


def w_commutator_gradient(W_prev, psi, P=None, backend=None):
    """Gradient of ``1/2 sum_{k>=2} ||[W, Psi_k]||_F^2`` w.r.t. ``W``."""
    w = W_prev.value() if isinstance(W_prev, SplitGSO) else np.asarray(W_prev, dtype=float)
    value = psi.value() if isinstance(psi, FilterBank) else np.asarray(psi, dtype=float)
    P = psi.P if isinstance(psi, FilterBank) else int(P)
    if P < 2:
        return np.zeros_like(w)
    k = _kernels.get_backend(backend)
    return k.w_commutator_grad(np.ascontiguousarray(w), to_blocks(value, P))


def w_objective(W, psi_blocks, gamma):
    """Smooth part of the GSO sub-problem: ``1/2||Psi_1 - W||^2 + gamma/2 sum_k ||[W, Psi_k]||^2``."""
    d = psi_blocks[0] - W
    f = 0.5 * float(np.sum(d * d))
    if gamma:
        for B in psi_blocks[1:]:
            C = W @ B - B @ W
            f += 0.5 * gamma * float(np.sum(C * C))
    return f


def w_direction(W_prev, psi, gamma, S=None, backend=None):
    """``V = W_{t-1} - (Psi_1 - gamma S)``."""
    w = W_prev.value() if isinstance(W_prev, SplitGSO) else np.asarray(W_prev, dtype=float)
    psi1 = psi.block(1) if isinstance(psi, FilterBank) else np.asarray(psi, dtype=float)[:, :w.shape[0]]
    if S is None:
        S = w_commutator_gradient(w, psi, backend=backend) if gamma else 0.0
    return w - (psi1 - gamma * S)


def update_w_path1(W, psi, gamma, mu1, beta, mask=None, S=None, backend=None):
    """Projected step on the split GSO (in place)."""
    V = w_direction(W, psi, gamma, S, backend=backend)
    if not np.all(np.isfinite(V)):
        raise DivergenceError("non-finite GSO gradient")
    n = W.pos.shape[0]
    k = _kernels.get_backend(backend)
    k.split_project(W.pos, W.neg, np.ascontiguousarray(V), np.full(n, float(mu1)), np.full(n, float(beta)))
    if mask is not None:
        off = ~np.asarray(mask, dtype=bool)
        W.pos[off] = 0.0
        W.neg[off] = 0.0
    return W


def extract_w_path2(psi):
    """First filter block, taken verbatim as the GSO estimate."""
    n = psi.n
    return SplitGSO(psi.pos[:, :n].copy(), psi.neg[:, :n].copy())


def build_y_matrix(W, history, P=None, backend=None):
    """``[x_{t-1}, W x_{t-1}, x_{t-2}, W x_{t-2}, W^2 x_{t-2}, ...]`` (``N x M``).

    ``history`` is ``(P, N)`` with row ``p-1`` holding ``x_{t-p}``.
    """
    w = np.ascontiguousarray(W.value() if isinstance(W, SplitGSO) else getattr(W, "weights", W), dtype=float)
    hist = np.ascontiguousarray(np.atleast_2d(history), dtype=float)
    if P is not None and hist.shape[0] != P:
        raise ParameterError(f"history needs {P} rows, got {hist.shape[0]}")
    if hist.shape[1] != w.shape[0]:
        raise ParameterError(f"history width {hist.shape[1]} does not match n={w.shape[0]}")
    return _kernels.get_backend(backend).build_y(w, hist)


def reweight_vector(h, epsilon):
    """``sign(h) / (epsilon + |h|)`` with ``sign(0) = 0``."""
    h = np.asarray(h, dtype=float)
    den = epsilon + np.abs(h)
    return np.divide(np.sign(h), den, out=np.zeros_like(h), where=h != 0)


def update_h(h, Y, x_t, rho, eta_t, epsilon=1e-8, mode=HMode.INSTANTANEOUS, stats=None):
    """One reweighted-l1 LMS step on the filter coefficients; returns the new vector.

    The least-squares part is ``h + rho Y^T e`` with ``e = x_t - Y h``
    (instantaneous) or ``h - rho (C h - u)`` after refreshing ``C, u`` in
    ``stats`` (accumulated).  Each coefficient is then shrunk towards zero by
    ``rho eta_t |b|`` with ``b = sign(h) / (epsilon + |h|)``, stopping at zero.
    """
    mode = HMode(mode)
    b = reweight_vector(h, epsilon)
    if mode is HMode.INSTANTANEOUS:
        e = x_t - Y @ h
        ls = h + rho * (Y.T @ e)
    else:
        if stats is None:
            raise ParameterError("accumulated mode needs RecursiveStats")
        stats.C *= stats.lam
        stats.C += Y.T @ Y
        stats.u *= stats.lam
        stats.u += Y.T @ x_t
        ls = h - rho * (stats.C @ h - stats.u)
    # shrink towards zero by the reweighted amount, never across it
    new = np.sign(ls) * np.maximum(np.abs(ls) - rho * eta_t * np.abs(b), 0.0)
    if not np.all(np.isfinite(new)):
        raise DivergenceError("non-finite filter coefficients")
    return new


def debias_step(psi, support, stats, steps):
    """Unregularised gradient step restricted to ``support``; returns the new ``N x NP`` value."""
    value = psi.value() if isinstance(psi, FilterBank) else np.asarray(psi, dtype=float)
    support = np.asarray(support, dtype=bool)
    if not support.any():
        return value.copy()
    n = value.shape[0]
    G = value @ stats.R - stats.Pxy
    G[~support] = 0.0
    if not np.all(np.isfinite(G)):
        raise DivergenceError("non-finite debiasing gradient")
    return value - G * np.repeat(np.asarray(steps, dtype=float), n)[None, :]


# ---------------------------------------------------------------------------
# estimator
# ---------------------------------------------------------------------------

def _bounded(a):
    # also catches NaN, which fails every comparison
    return bool(np.abs(a).max(initial=0.0) <= DIVERGENCE_LIMIT)


def _psi_objective(value, stats, gamma, P):
    f = 0.5 * float(np.sum((value @ stats.R) * value)) - float(np.sum(stats.Pxy * value))
    if gamma and P > 1:
        B = to_blocks(value, P)
        for i in range(P):
            for j in range(i + 1, P):
                C = B[i] @ B[j] - B[j] @ B[i]
                f += 0.5 * gamma * float(np.sum(C * C))
    return f


class AdaCGP:
    """Sequential estimator; feed samples with :meth:`step`.

    ``self.W`` is the reported GSO estimate (debiased once the second phase
    runs), ``self.h`` the filter-coefficient estimate.
    """

    def __init__(self, n, config):
        self.n = int(n)
        self.cfg = config
        P = config.P
        if config.mask is not None and config.mask.shape != (self.n, self.n):
            raise ParameterError(f"mask shape {config.mask.shape} does not match n={self.n}")
        self.kern = _kernels.get_backend(config.backend)
        self.stats = RecursiveStats.zeros(self.n, P, config.lam)
        self.psi = FilterBank.zeros(self.n, P)
        self.w_split = SplitGSO.zeros(self.n)
        self.psi_db = np.zeros((self.n, self.n * P))
        self.support = np.zeros((self.n, self.n * P), dtype=bool)
        self.h = np.zeros(n_coeffs(P))
        self.hist = np.zeros((P, self.n))
        self.tracker = LambdaMaxTracker(config.power_iters)
        self.det1 = SteadyStateDetector(config.ema_alpha, config.patience, config.rel_improvement)
        self.det2 = SteadyStateDetector(config.ema_alpha, config.patience, config.rel_improvement)
        self.t = 0
        self.switched = config.debias is DebiasMode.ALTERNATING
        self.switch_step = None
        self.terminal_step = None
        self.mu_t = np.zeros(P)
        self.alpha = 0.0
        self.invariant_violations = 0
        self.support_violations = 0
        self._last_step = {"psi": 1.0, "w": 1.0, "h": 1.0}
        self.armijo_failures = 0

    # -- views -----------------------------------------------------------
    @property
    def phase2(self):
        return self.cfg.debias is not DebiasMode.NONE and self.switched

    @property
    def W(self):
        if self.phase2:
            return self.psi_db[:, :self.n].copy()
        return self.w_split.value()

    def model_psi(self):
        return self.psi_db if self.phase2 and self.cfg.debias is DebiasMode.AFTER_STEADY_STATE else self.psi.value()

    # -- step sizes ------------------------------------------------------
    def _line_search(self, key, objective, grad, point):
        init = min(1.0, 2.0 * self._last_step[key])
        step, ok = armijo_step(objective, grad, point, init_step=init)
        if not ok:
            self.armijo_failures += 1
        self._last_step[key] = step
        return step

    def _filter_step(self, xw):
        cfg = self.cfg
        if cfg.step_mode is StepMode.FIXED:
            return cfg.step_size
        return adaptive_step_size(self.stats.R, xw, cfg.epsilon, tracker=self.tracker, fallback=cfg.step_size,
                                  cap=True)

    # -- phase 1 ---------------------------------------------------------
    def _phase1(self, xw):
        cfg, P, n = self.cfg, self.cfg.P, self.n
        value = self.psi.value()
        Q = None
        if cfg.path is Path.P2 and cfg.gamma and P > 1:
            Q = psi_commutator_gradient(value, P, backend=self.kern.name)
        for p in range(P):
            sl = slice(p * n, (p + 1) * n)
            self.mu_t[p] = sparsity_schedule(self.stats.Pxy[:, sl], None if Q is None else Q[:, sl], cfg.gamma, cfg.mu[p])
        G = psi_gradient(value, self.stats, cfg.gamma, Q, cfg.mask)
        if cfg.step_mode is StepMode.ARMIJO:
            gamma_eff = cfg.gamma if Q is not None else 0.0
            # a split step of size a moves Psi+ - Psi- by 2aG, so search along 2G
            alpha = self._line_search("psi", lambda v: _psi_objective(v, self.stats, gamma_eff, P), 2.0 * G, value)
        else:
            alpha = self.alpha
        update_psi_split(self.psi, G, self.mu_t, np.full(P, alpha), cfg.mask, backend=self.kern.name)
        if cfg.path is Path.P1:
            new = self.psi.value()
            blocks = to_blocks(new, P)
            w_prev = self.w_split.value()
            S = self.kern.w_commutator_grad(np.ascontiguousarray(w_prev), blocks) if cfg.gamma and P > 1 else None
            V = w_direction(w_prev, new, cfg.gamma, 0.0 if S is None else S)
            if cfg.w_step == "armijo":
                beta = self._line_search("w", lambda w: w_objective(w, blocks, cfg.gamma), 2.0 * V, w_prev)
            else:
                beta = float(cfg.w_step)
            if cfg.w_mu_mode == "shared":
                mu_w = self.mu_t[0]
            else:
                mu_w = cfg.mu[0] * float(np.abs(blocks[0]).max(initial=0.0))
            update_w_path1(self.w_split, new, cfg.gamma, mu_w, beta, cfg.mask,
                           S=0.0 if S is None else S, backend=self.kern.name)
        else:
            self.w_split = extract_w_path2(self.psi)

    def _first_block_target(self):
        # the GSO estimate stands in for the first filter block
        target = self.psi.value()
        target[:, :self.n] = self.w_split.value()
        return target

    def _start_phase2(self):
        self.psi_db = self._first_block_target()
        self.support = self.psi_db != 0

    def _refresh_support(self):
        target = self._first_block_target()
        self.support = target != 0
        self.psi_db[~self.support] = 0.0
        fresh = self.support & (self.psi_db == 0)
        self.psi_db[fresh] = target[fresh]

    # -- phase 2 ---------------------------------------------------------
    def _phase2(self, x, xw):
        cfg, P, n = self.cfg, self.cfg.P, self.n
        if cfg.debias is DebiasMode.ALTERNATING:
            self._refresh_support()
        before = self.psi_db != 0 if cfg.validate else None
        self.psi_db = debias_step(self.psi_db, self.support, self.stats, np.full(P, self.alpha))
        if cfg.validate and not np.array_equal(before, self.psi_db != 0):
            self.support_violations += 1
        W = np.ascontiguousarray(self.psi_db[:, :n])
        Y = self.kern.build_y(W, self.hist)
        pred = Y @ self.h
        xx = float(x @ x)
        nmse_h = float((x - pred) @ (x - pred)) / xx if xx > 0 else math.nan
        eta_t = h_sparsity_weight(Y, x, cfg.eta)
        if cfg.h_step == "armijo":
            if cfg.h_mode is HMode.INSTANTANEOUS:
                grad = -(Y.T @ (x - pred))
                rho = self._line_search("h", lambda h: 0.5 * float(np.sum((x - Y @ h) ** 2)), grad, self.h)
            else:
                C = cfg.lam * self.stats.C + Y.T @ Y
                u = cfg.lam * self.stats.u + Y.T @ x
                grad = C @ self.h - u
                rho = self._line_search("h", lambda h: 0.5 * float(h @ C @ h) - float(u @ h), grad, self.h)
        else:
            rho = float(cfg.h_step)
        self.h = update_h(self.h, Y, x, rho, eta_t, cfg.h_epsilon, cfg.h_mode, self.stats)
        return nmse_h

    def _check_invariants(self):
        bad = 0
        for a in (self.psi.pos, self.psi.neg, self.w_split.pos, self.w_split.neg):
            bad += int(np.count_nonzero(a < 0))
        if self.cfg.mask is not None:
            off = ~self.cfg.mask
            bad += int(np.count_nonzero(self.W[off]))
            bad += int(np.count_nonzero(self.psi.value()[~_tile_mask(self.cfg.mask, self.cfg.P)]))
        self.invariant_violations += bad

    # -- driver ----------------------------------------------------------
    def step(self, x):
        """Consume one sample; returns ``(nmse_psi, nmse_h)`` (``nan`` when undefined)."""
        cfg = self.cfg
        x = np.ascontiguousarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ParameterError(f"sample must have length {self.n}, got {x.shape}")
        self.t += 1
        xw = self.hist.ravel()
        xx = float(x @ x)
        r = x - self.model_psi() @ xw
        nmse_psi = float(r @ r) / xx if xx > 0 else math.nan

        update_recursive_stats(self.stats, x, xw, backend=self.kern.name)
        self.alpha = self._filter_step(xw)

        run1 = cfg.debias is not DebiasMode.AFTER_STEADY_STATE or not self.switched
        nmse_h = math.nan
        if run1:
            self._phase1(xw)
        if self.phase2:
            nmse_h = self._phase2(x, xw)
        if not all(_bounded(a) for a in (self.psi.pos, self.psi.neg, self.w_split.pos, self.w_split.neg,
                                         self.psi_db, self.h)):
            raise DivergenceError(f"estimator diverged at step {self.t}", step=self.t)
        if cfg.validate:
            self._check_invariants()

        # steady-state bookkeeping
        if cfg.debias is DebiasMode.AFTER_STEADY_STATE and not self.switched:
            if math.isfinite(nmse_psi) and self.det1.update(nmse_psi):
                self.switched = True
                self.switch_step = self.t
                self._start_phase2()
        elif cfg.debias is DebiasMode.NONE:
            if math.isfinite(nmse_psi) and self.det1.update(nmse_psi) and self.terminal_step is None:
                self.terminal_step = self.t
        elif math.isfinite(nmse_h) and self.det2.update(nmse_h) and self.terminal_step is None:
            self.terminal_step = self.t

        self.hist[1:] = self.hist[:-1]
        self.hist[0] = x
        return nmse_psi, nmse_h
