"""Quantum federated learning simulator with adversarial training and robustness metrology.

Layers, bottom to top:

* :mod:`qflsim.simcore` — statevector simulation and exact gradients.
* :mod:`qflsim.qnn` — amplitude encoding, the layered ansatz, readout, loss.
* :mod:`qflsim.adversary` — projected gradient descent attacks (l-infinity).
* :mod:`qflsim.data` — IDX ingestion, 8x8 preprocessing, client partitioning.
* :mod:`qflsim.federation` — local adversarial training, federated averaging.
* :mod:`qflsim.metrics` — accuracy-under-attack surfaces, ARA and RV.
* :mod:`qflsim.cli` — experiment orchestration (train / eval / sweep / report).
"""

from .simcore import (
    CNOT,
    RY,
    RZ,
    CircuitProgram,
    GateOp,
    StateVector,
    adjoint_gradients,
    apply_gate,
    expectation_z,
    parameter_shift_grad,
    run_circuit,
    zero_state,
)
from .qnn import (
    ModelConfig,
    Prediction,
    ZeroInputWarning,
    build_ansatz,
    encode,
    forward,
    forward_batch,
    grad_input,
    grad_input_batch,
    grad_params,
    grad_params_batch,
    load_checkpoint,
    loss,
    predict_batch,
    save_checkpoint,
)
from .adversary import AttackConfig, attack_batch, pgd_attack, pgd_attack_batch
from .data import (
    Shard,
    SplitSpec,
    load_idx,
    partition,
    pool_2x2,
    preprocess,
    resize_bilinear,
    subsample,
    write_dataset_manifest,
)
from .synth import write_synthetic_idx
from .federation import (
    AdamState,
    ClientState,
    ExperimentResult,
    FederationConfig,
    FineTune,
    Fixed,
    Mix,
    RoundRecord,
    Scratch,
    adam_step,
    assign_coverage,
    assign_epsilons,
    centralized_train,
    fedavg,
    initial_params,
    local_train,
    run_experiment,
)
from .metrics import (
    RobustnessSurface,
    ara,
    ara_mean,
    eval_accuracy,
    read_surface_csv,
    rv,
    write_metrics_json,
    write_surface_csv,
)
from .errors import (
    ConfigError,
    IngestError,
    MetricError,
    ProtocolError,
    QflsimError,
    UsageError,
)

__version__ = "0.1.0"
