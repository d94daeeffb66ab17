"""Run an estimator over a stream and record per-step diagnostics."""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .cgp import SignalStream
from .core import AdaCGP
from .metrics import classify_edges, nmse_gso

TRACE_FIELDS = ("t", "nmse_psi", "nmse_h", "nnz_w", "nmse_w", "p_miss", "p_false_alarm", "f1")


@dataclass
class EstimatorTrace:
    """Per-step metric columns plus GSO snapshots every ``snapshot_stride`` steps.

    Truth-dependent columns (``nmse_w``, ``p_miss``, ...) stay empty when no
    ground-truth GSO was supplied.
    """

    columns: dict = field(default_factory=lambda: {k: [] for k in TRACE_FIELDS})
    snapshot_steps: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    switch_step: object = None
    terminal_step: object = None
    diverged_at: object = None
    final_W: object = None
    final_h: object = None

    def append(self, **row):
        for k in TRACE_FIELDS:
            self.columns[k].append(row.get(k, math.nan))

    def __len__(self):
        return len(self.columns["t"])

    def array(self, name):
        return np.asarray(self.columns[name], dtype=float)

    def window_mean(self, name, window):
        """Mean of the finite values of ``name`` over the last ``window`` steps."""
        vals = self.array(name)[-int(window):]
        vals = vals[np.isfinite(vals)]
        return float(vals.mean()) if vals.size else math.nan

    def rows(self):
        for i in range(len(self)):
            yield {k: _json_float(self.columns[k][i]) for k in TRACE_FIELDS}

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            for row in self.rows():
                fh.write(json.dumps(row) + "\n")


def _json_float(v):
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else None


def read_trace_jsonl(path):
    trace = EstimatorTrace()
    with open(path) as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                trace.append(**{k: (math.nan if v is None else v) for k, v in row.items()})
    return trace


def run_adacgp(stream, config, w_true=None, callback=None, estimator=None):
    """Feed ``stream`` through a fresh :class:`AdaCGP`; returns ``(estimator, trace)``.

    A divergence stops the run and is recorded in ``trace.diverged_at``
    instead of propagating.  ``callback(estimator, t)`` is called after every
    step.  With ``config.stop_on_steady_state`` the run ends at the terminal
    steady-state step.
    """
    samples = stream.samples if isinstance(stream, SignalStream) else np.asarray(stream, dtype=float)
    n = samples.shape[1]
    est = estimator if estimator is not None else AdaCGP(n, config)
    w_true = None if w_true is None else np.asarray(getattr(w_true, "weights", w_true), dtype=float)
    trace = EstimatorTrace()
    stride = max(int(config.snapshot_stride), 1)
    for x in samples:
        try:
            nmse_psi, nmse_h = est.step(x)
        except FloatingPointError as err:
            trace.diverged_at = getattr(err, "step", est.t)
            break
        W = est.W
        row = {"t": est.t, "nmse_psi": nmse_psi, "nmse_h": nmse_h, "nnz_w": int(np.count_nonzero(W))}
        if w_true is not None:
            rep = classify_edges(w_true, W)
            row.update(nmse_w=nmse_gso(w_true, W), p_miss=rep.p_miss,
                       p_false_alarm=rep.p_false_alarm, f1=rep.f1)
        trace.append(**row)
        if config.keep_snapshots and est.t % stride == 0:
            trace.snapshot_steps.append(est.t)
            trace.snapshots.append(W)
        if callback is not None:
            callback(est, est.t)
        if config.stop_on_steady_state and est.terminal_step is not None:
            break
    trace.switch_step = est.switch_step
    trace.terminal_step = est.terminal_step
    trace.final_W = est.W
    trace.final_h = est.h.copy()
    return est, trace
