"""Ground-truth graph shift operators for the synthetic topologies."""
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

MAX_ATTEMPTS = 16
SBM_CLUSTERS = 10
KREG_NEIGHBOURS = 3


class ParameterError(ValueError):
    """Invalid parameter combination."""


class DegenerateGraphError(RuntimeError):
    """No usable graph after the bounded number of regeneration attempts."""


class Topology(str, Enum):
    RANDOM = "random"
    ERDOS_RENYI = "er"
    K_REGULAR = "kr"
    SBM = "sbm"
    EXTERNAL = "external"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "random": cls.RANDOM, "r": cls.RANDOM,
            "er": cls.ERDOS_RENYI, "erdosrenyi": cls.ERDOS_RENYI,
            "kr": cls.K_REGULAR, "kregular": cls.K_REGULAR,
            "sbm": cls.SBM, "stochasticblockmodel": cls.SBM,
            "external": cls.EXTERNAL,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ParameterError(f"unknown topology {value!r}") from None


# spectral normalisation factor per topology
NORM_FACTOR = {
    Topology.RANDOM: 1.5,
    Topology.ERDOS_RENYI: 1.5,
    Topology.K_REGULAR: 1.1,
    Topology.SBM: 1.1,
}


@dataclass
class GraphShiftOperator:
    """Weighted (possibly directed) shift matrix with an explicit zero pattern."""

    weights: np.ndarray
    kind: Topology = Topology.EXTERNAL

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ParameterError(f"GSO must be square, got shape {w.shape}")
        self.weights = w
        self.kind = Topology.parse(self.kind)

    @property
    def n(self):
        return self.weights.shape[0]

    @property
    def support(self):
        return self.weights != 0

    def spectral_radius(self):
        return spectral_radius(self.weights)

    def density(self):
        """Fraction of non-zero off-diagonal entries."""
        off = ~np.eye(self.n, dtype=bool)
        return float(np.count_nonzero(self.weights[off])) / max(off.sum(), 1)


def spectral_radius(W):
    W = np.asarray(W, dtype=float)
    if W.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(W))))


def normalize_spectral(W, factor):
    """Scale ``W`` so that its spectral radius becomes ``1 / factor``."""
    kind = W.kind if isinstance(W, GraphShiftOperator) else Topology.EXTERNAL
    w = W.weights if isinstance(W, GraphShiftOperator) else np.asarray(W, dtype=float)
    if factor <= 1:
        raise ParameterError(f"normalisation factor must exceed 1, got {factor}")
    lam = spectral_radius(w)
    scale = max(np.abs(w).max(initial=0.0), 1.0)
    if lam <= 1e-12 * scale:
        raise DegenerateGraphError("largest eigenvalue magnitude is zero; cannot normalise")
    return GraphShiftOperator(w / (factor * lam), kind)


def _draw_random(n, rng):
    w = rng.standard_normal((n, n))
    wmax = np.abs(w).max()
    a = np.abs(w)
    w[(a < 0.3 * wmax) | (a > 0.7 * wmax)] = 0.0
    np.fill_diagonal(w, 0.0)
    return w


def _draw_er(n, rng):
    w = rng.standard_normal((n, n))
    a = np.abs(w)
    keep = (a >= 1.6) & (a <= 1.8)
    w = np.where(keep, np.sign(w) * (a - 1.5), 0.0)
    np.fill_diagonal(w, 0.0)
    return w


def _draw_kregular(n, rng):
    offsets = (1, -1, 2)
    w = np.zeros((n, n))
    for i in range(n):
        for off in offsets:
            w[i, (i + off) % n] = rng.uniform(0.5, 1.0)
    # mirror: the i<j draw wins where both directions were drawn
    upper = np.triu(w, 1)
    lower = np.tril(w, -1)
    sym = upper + upper.T
    extra = np.where((sym == 0) & (lower != 0), lower, 0.0)
    return sym + extra + extra.T


def _draw_sbm(n, rng, k=SBM_CLUSTERS, p_in=0.05, p_out_max=0.04, rate=2.0):
    labels = np.repeat(np.arange(k), n // k)
    probs = rng.uniform(0.0, p_out_max, size=(k, k))
    np.fill_diagonal(probs, p_in)
    edge_p = probs[labels[:, None], labels[None, :]]
    mask = rng.random((n, n)) < edge_p
    np.fill_diagonal(mask, False)
    return np.where(mask, rng.laplace(0.0, 1.0 / rate, size=(n, n)), 0.0)


_DRAWERS = {
    Topology.RANDOM: _draw_random,
    Topology.ERDOS_RENYI: _draw_er,
    Topology.K_REGULAR: _draw_kregular,
    Topology.SBM: _draw_sbm,
}


def generate_gso(kind, n, seed):
    """Draw a normalised ground-truth GSO of the given topology.

    Degenerate draws (all zero, or nilpotent so the spectrum vanishes) are
    redrawn from derived sub-seeds, at most ``MAX_ATTEMPTS`` times.  If every
    non-zero draw was nilpotent the first one is returned unscaled with a
    warning; only all-zero draws raise.
    """
    kind = Topology.parse(kind)
    if kind is Topology.EXTERNAL:
        raise ParameterError("cannot generate an external GSO")
    n = int(n)
    if n < 2:
        raise ParameterError(f"need n >= 2, got {n}")
    if kind is Topology.K_REGULAR and n <= KREG_NEIGHBOURS:
        raise ParameterError(f"k-regular graph needs n > {KREG_NEIGHBOURS}, got {n}")
    if kind is Topology.SBM and n % SBM_CLUSTERS:
        raise ParameterError(f"SBM needs n divisible by {SBM_CLUSTERS}, got {n}")

    draw = _DRAWERS[kind]
    nilpotent = None
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), attempt]))
        w = draw(n, rng)
        if not np.any(w):
            continue
        try:
            return normalize_spectral(GraphShiftOperator(w, kind), NORM_FACTOR[kind])
        except DegenerateGraphError:
            if nilpotent is None:
                nilpotent = w
    if nilpotent is not None:
        # acyclic every time: keep the first draw unscaled (its spectrum is already zero)
        warnings.warn(f"{kind.value} graph (n={n}, seed={seed}) is nilpotent; returned without normalisation",
                      RuntimeWarning, stacklevel=2)
        return GraphShiftOperator(nilpotent, kind)
    raise DegenerateGraphError(f"{kind.value} graph (n={n}, seed={seed}) all-zero after {MAX_ATTEMPTS} attempts")


# ---------------------------------------------------------------------------
# CSV exchange
# ---------------------------------------------------------------------------

_FMT = "%.17g"


def save_gso_csv(path, W):
    """Dense row-major CSV; first line holds ``n``."""
    w = W.weights if isinstance(W, GraphShiftOperator) else np.asarray(W, dtype=float)
    n = w.shape[0]
    with open(path, "w") as fh:
        fh.write(f"{n}\n")
        np.savetxt(fh, w, delimiter=",", fmt=_FMT)


def load_gso_csv(path, kind=Topology.EXTERNAL):
    with open(path) as fh:
        header = fh.readline().strip()
        try:
            n = int(header)
        except ValueError:
            raise ParameterError(f"{path}: first line must be the node count, got {header!r}") from None
        w = np.loadtxt(fh, delimiter=",", ndmin=2)
    if w.shape != (n, n):
        raise ParameterError(f"{path}: expected {n}x{n} matrix, got {w.shape}")
    return GraphShiftOperator(w, kind)


def save_gso_triplets(path, W):
    """Sparse ``i,j,w`` triplets with an ``# n=<n>`` comment line."""
    w = W.weights if isinstance(W, GraphShiftOperator) else np.asarray(W, dtype=float)
    rows, cols = np.nonzero(w)
    with open(path, "w") as fh:
        fh.write(f"# n={w.shape[0]}\n")
        fh.write("i,j,w\n")
        for i, j in zip(rows, cols):
            fh.write(f"{i},{j},{_FMT % w[i, j]}\n")


def load_gso_triplets(path, kind=Topology.EXTERNAL):
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# n="):
        raise ParameterError(f"{path}: missing '# n=<n>' header")
    n = int(lines[0][4:])
    w = np.zeros((n, n))
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ParameterError(f"{path}:{lineno}: expected 'i,j,w'")
        w[int(parts[0]), int(parts[1])] = float(parts[2])
    return GraphShiftOperator(w, kind)
