"""Online sparse graph-topology estimation for causal graph processes."""
from .baselines import AdaptiveVar, AdaptiveVarState, update_adaptive_var, var_causality_to_gso
from .cgp import (
    DivergenceError,
    FilterCoeffs,
    SignalStream,
    generate_filter_coeffs,
    load_stream_csv,
    save_stream_csv,
    simulate_cgp,
    simulate_switching_cgp,
)
from .control import LambdaMaxTracker, SteadyStateDetector, adaptive_step_size, armijo_step
from .core import AdaCGP, DebiasMode, EstimatorConfig, HMode, Path, StepMode, parse_variant
from .experiments import (
    ExperimentConfig,
    benchmark_complexity,
    hyperparameter_search,
    ingest_stream,
    load_config,
    run_experiment,
    sparsity_sweep,
)
from .graphs import (
    DegenerateGraphError,
    GraphShiftOperator,
    ParameterError,
    Topology,
    generate_gso,
    load_gso_csv,
    normalize_spectral,
    save_gso_csv,
)
from .metrics import classify_edges, gso_lag_stability, nmse_gso, nmse_prediction, out_in_degrees
from .trace import EstimatorTrace, run_adacgp

__version__ = "0.1.0"
