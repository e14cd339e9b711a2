"""Nested gradient codes: construction, exact latency analysis, cluster
simulation, and coded gradient descent with exact full-gradient recovery."""

from .codes import (
    CodeParams,
    DecodingRow,
    EncodingMatrix,
    NestedGradientCode,
    StorageParams,
    build_cyclic_encoding,
    build_ngc,
    code_from_json,
    code_to_json,
    decode_row,
    encode_response,
    identity_encoding,
    load_code,
    max_tolerable_stragglers,
    save_code,
    verify_gradient_code,
    verify_nesting,
)
from .descent import (
    Dataset,
    DescentState,
    coded_iteration,
    dataset_loss,
    make_dataset,
    partial_gradient,
    partition,
    plain_descent,
    run_descent,
    default_learning_rate,
)
from .latency import (
    ClusterParams,
    LatencyCurve,
    Scheme,
    failure_count_pmf,
    gc_latency_cdf,
    latency_curve,
    ngc_latency_cdf,
    ngc_latency_cdf_zero_shift,
    parse_scheme,
    task_time_cdf,
)
from .simulator import (
    IterationOutcome,
    WorkerTrace,
    run_experiment,
    sample_worker_trace,
    simulate_gc_iteration,
    simulate_ngc_iteration,
    trial_rng,
)

__version__ = "0.1.0"
