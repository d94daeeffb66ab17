"""Filter coefficients and causal graph process (CGP) simulation."""
import warnings
from dataclasses import dataclass

import numpy as np

from .graphs import GraphShiftOperator, ParameterError

DIVERGENCE_LIMIT = 1e12


class DivergenceError(FloatingPointError):
    """A recursion left the finite range; ``step`` is the offending index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


def n_coeffs(P):
    return P * (P + 3) // 2


def block_offset(p):
    """Start index of the lag-``p`` block (1-based lag) in the stacked coefficient vector."""
    return (p - 1) * (p + 2) // 2


@dataclass
class FilterCoeffs:
    """Stacked per-lag polynomial coefficients ``(h_10, h_11, h_20, h_21, h_22, ...)``."""

    order: int
    values: np.ndarray

    def __post_init__(self):
        self.order = int(self.order)
        if self.order < 1:
            raise ParameterError(f"filter order must be >= 1, got {self.order}")
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size != n_coeffs(self.order):
            raise ParameterError(
                f"order {self.order} needs {n_coeffs(self.order)} coefficients, got {self.values.size}"
            )

    def block(self, p):
        start = block_offset(p)
        return self.values[start:start + p + 1]

    def filters(self, W):
        """Dense ``(P, N, N)`` stack of the lag filters ``H_p(W, h_p)``."""
        w = W.weights if isinstance(W, GraphShiftOperator) else np.asarray(W, dtype=float)
        n = w.shape[0]
        out = np.zeros((self.order, n, n))
        for p in range(1, self.order + 1):
            power = np.eye(n)
            for coef in self.block(p):
                out[p - 1] += coef * power
                power = w @ power
        return out


def generate_filter_coeffs(P, seed, sample_first_block=False):
    """Draw sparse-magnitude CGP coefficients.

    Coefficients of lags ``i >= 2`` satisfy ``2**(i+j) h_ij ~ 0.5 U(-1,-0.45) + 0.5 U(0.45,1)``
    and are then divided by 1.5.  The lag-1 block is pinned to ``(0, 1)`` so that
    the first filter equals the GSO itself; ``sample_first_block=True`` draws it
    from the same law instead.
    """
    P = int(P)
    if P < 1:
        raise ParameterError(f"P must be >= 1, got {P}")
    rng = np.random.default_rng(seed)
    values = np.empty(n_coeffs(P))
    for i in range(1, P + 1):
        for j in range(i + 1):
            mag = rng.uniform(0.45, 1.0)
            sign = 1.0 if rng.random() < 0.5 else -1.0
            values[block_offset(i) + j] = sign * mag / 2.0 ** (i + j) / 1.5
    if not sample_first_block:
        values[0], values[1] = 0.0, 1.0
    return FilterCoeffs(P, values)


def apply_graph_filter(W, h_block, x):
    """Evaluate ``sum_l h_l W^l x`` by repeated shifting."""
    w = W.weights if isinstance(W, GraphShiftOperator) else np.asarray(W, dtype=float)
    x = np.asarray(x, dtype=float)
    h_block = np.atleast_1d(np.asarray(h_block, dtype=float))
    if w.ndim != 2 or w.shape[0] != w.shape[1] or x.shape != (w.shape[0],):
        raise ParameterError(f"dimension mismatch: W {w.shape}, x {x.shape}")
    if h_block.size == 0:
        raise ParameterError("empty coefficient block")
    out = h_block[0] * x
    v = x
    for coef in h_block[1:]:
        v = w @ v
        out = out + coef * v
    return out


@dataclass
class SignalStream:
    """Graph signals, one row per retained time step."""

    samples: np.ndarray
    burn_in: int = 0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2:
            raise ParameterError(f"samples must be 2-D (T, n), got shape {s.shape}")
        self.samples = s

    @property
    def n(self):
        return self.samples.shape[1]

    @property
    def T(self):
        return self.samples.shape[0]

    def __len__(self):
        return self.T

    def __iter__(self):
        return iter(self.samples)


def _simulate(gso_at, h, total, n, rng):
    P = h.order
    # P zero initial conditions precede the first generated sample
    buf = np.zeros((total + P, n))
    blocks = [h.block(p) for p in range(1, P + 1)]
    for t in range(P, total + P):
        w = gso_at(t - P)
        x = rng.standard_normal(n)
        for p in range(1, P + 1):
            x += apply_graph_filter(w, blocks[p - 1], buf[t - p])
        if not np.all(np.abs(x) <= DIVERGENCE_LIMIT):
            raise DivergenceError(f"CGP simulation diverged at step {t - P}", step=t - P)
        buf[t] = x
    return buf[P:]


def _check_stable(w):
    rho = np.max(np.abs(np.linalg.eigvals(w)))
    if rho >= 1:
        warnings.warn(f"GSO spectral radius {rho:.3f} >= 1; the process may be unstable", RuntimeWarning, stacklevel=3)


def simulate_cgp(W, h, T, burn_in=1000, seed=None):
    """Simulate ``x_t = sum_p H_p(W, h_p) x_{t-p} + w_t`` with unit Gaussian noise.

    ``burn_in + T`` samples are generated and the first ``burn_in`` dropped.
    """
    w = W.weights if isinstance(W, GraphShiftOperator) else np.asarray(W, dtype=float)
    T, burn_in = int(T), int(burn_in)
    if T <= 0 or burn_in < 0:
        raise ParameterError(f"need T > 0 and burn_in >= 0, got T={T}, burn_in={burn_in}")
    _check_stable(w)
    rng = np.random.default_rng(seed)
    data = _simulate(lambda t: w, h, burn_in + T, w.shape[0], rng)
    return SignalStream(data[burn_in:], burn_in)


def simulate_switching_cgp(gsos, h, segment_length, T, burn_in=1000, seed=None):
    """Like :func:`simulate_cgp` but the GSO cycles through ``gsos`` every ``segment_length`` retained steps."""
    mats = [g.weights if isinstance(g, GraphShiftOperator) else np.asarray(g, dtype=float) for g in gsos]
    if not mats:
        raise ParameterError("need at least one GSO")
    for m in mats:
        _check_stable(m)
    seg = int(segment_length)
    rng = np.random.default_rng(seed)

    def gso_at(t):
        k = max(t - burn_in, 0) // seg
        return mats[k % len(mats)]

    data = _simulate(gso_at, h, burn_in + int(T), mats[0].shape[0], rng)
    return SignalStream(data[burn_in:], burn_in)


def save_stream_csv(path, stream, comment=None):
    samples = stream.samples if isinstance(stream, SignalStream) else np.asarray(stream, dtype=float)
    header = comment if comment is not None else ""
    np.savetxt(path, samples, delimiter=",", fmt="%.17g", header=header, comments="# ")


def _parse_numeric_csv(path, what="stream"):
    rows = []
    width = None
    first_line = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            cells = text.split(",")
            try:
                vals = [float(c) for c in cells]
            except ValueError:
                raise ParameterError(f"{path}:{lineno}: non-numeric cell in {what}") from None
            if width is None:
                width, first_line = len(vals), lineno
            elif len(vals) != width:
                raise ParameterError(
                    f"{path}:{lineno}: ragged row with {len(vals)} columns "
                    f"(line {first_line} has {width})"
                )
            if not all(np.isfinite(vals)):
                raise ParameterError(f"{path}:{lineno}: NaN or infinite cell in {what}")
            rows.append(vals)
    if not rows:
        raise ParameterError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def load_stream_csv(path):
    """Read a stream written by :func:`save_stream_csv` (comment lines are skipped)."""
    return SignalStream(_parse_numeric_csv(path))
