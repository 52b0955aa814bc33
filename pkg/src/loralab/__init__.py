"""Numerical laboratory for asymmetric low-rank adapters on small MLPs.

Train box-constrained adapters against frozen random factors, measure
train/holdout generalization gaps on synthetic tasks, evaluate the matching
closed-form gap envelope, and verify the random-matrix and anti-concentration
ingredients of the worst-case construction.
"""

__version__ = "0.1.0"

from .rng import RngKey, ensure_generator
from .linalg import SvdResult, operator_norm, pinv, sample_gaussian, smallest_singular_value, svd
from .network import (
    ACTIVATIONS,
    Architecture,
    LoraAdapter,
    ParamCounts,
    PretrainedNet,
    adapter_from_payload,
    adapter_to_payload,
    backprop,
    count_params,
    forward_lora,
    forward_pretrained,
    init_adapter,
    load_json,
    materialize_delta,
    net_from_payload,
    net_to_payload,
    random_pretrained,
    save_json,
)
from .bounds import (
    BoundConfig,
    BoundReport,
    DudleyValue,
    adapter_class_covering_log,
    ball_covering_log,
    dudley_rademacher_bound,
    failure_split,
    generalization_bound,
    loss_composition_lipschitz,
    parameterization_lipschitz,
    parameterization_lipschitz_interval,
    perturbation_radius,
)
from .empirical import (
    TrainConfig,
    TrainingDiverged,
    box_adapter_sampler,
    clipped_distance_loss,
    clipped_losses,
    cover_count,
    diameter_event_frequency,
    empirical_cover,
    empirical_risk,
    factor_lipschitz_growth,
    rademacher_from_losses,
    rademacher_mc,
    train_projected_sgd,
)
from .sweep import (
    CSV_HEADER,
    ExperimentRecord,
    SyntheticTask,
    gap_sweep,
    make_teacher_task,
    records_to_csv,
    run_cell,
    write_records_csv,
)
from .adversarial import (
    AdversarialInstance,
    ConcentrationViolation,
    GordonCheck,
    LowerBoundReport,
    SmallBallEstimate,
    UnionGordonCheck,
    build_identity_interpolator,
    construct_adversarial,
    gordon_verify,
    lower_bound_experiment,
    rectangular_identity,
    sample_assumption_dist,
    sign_sum_window_prob,
    small_ball,
    union_gordon,
    width_margin,
)
from .estimator import LoraMLPRegressor

__all__ = [name for name in dir() if not name.startswith("_")]
