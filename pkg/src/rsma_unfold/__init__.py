"""Deep-unfolded projected-gradient beamforming for QoS-aware RSMA downlink."""

__version__ = "0.1.0"

from .model import (
    BeamState,
    ChannelSample,
    FeasibilityReport,
    SampleLabel,
    ScenarioConfig,
    check_feasibility,
    common_rate_capacity,
    generate_channels,
    sinr,
    wsr,
)
from .pgd import (
    AuxiliaryVars,
    GradientSet,
    PgdConfig,
    PhiValues,
    gradients,
    penalty_objective,
    pgd_solve,
    pgd_step,
    phi,
    update_aux,
)
from .projection import (
    ProjectedPowers,
    ProjectionSystem,
    affine_project,
    apply_power,
    build_constraint_system,
    power_split,
    project,
    project_common_rate,
)
from .unfold import (
    ForwardTrace,
    LayerParams,
    ModelParams,
    forward,
    init_model,
    init_state,
    layer_forward,
    loss,
    violation_factor,
)
from .training import TrainConfig, param_gradient, train
from .evaluate import (MetricsReport, asr, evaluate, ood_sweep, pgd_oracle,
                       pgd_reference, runtime_bench, violation_rate)
