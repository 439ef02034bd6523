"""Trainable monotone submodular set functions over embedded ground sets.

The package provides: ground-set and similarity-kernel primitives with a
facility-location target oracle, matroid-rank aggregation networks that are
submodular by construction, a graded pairwise-comparison loss family with
closed-form gradients, passive/active set-pair sampling, greedy and
single-pass streaming maximization, a projected-Adam training loop, and an
evaluation harness (transfer quality, offline/online experimental design,
feature rankings).
"""

from .groundset import (
    FacilityLocation,
    GroundSet,
    ModularFunction,
    SetFunction,
    SimilarityKernel,
    as_items,
    conditional_gain,
    ensure_setfn,
    facility_location_eval,
    median_heuristic_gamma,
    oracle_score,
    rbf_similarity,
)
from .matroids import Matroid, weighted_matroid_rank
from .checks import PolymatroidReport, Violation, check_polymatroid_bruteforce, eval_all_subsets
from .model import (
    DspnFunction,
    DspnGradients,
    DspnModel,
    PillarParams,
    RoofParams,
    aggregate,
    default_activation_bank,
    dsf_eval,
    dspn_backward,
    dspn_eval,
    finite_difference_gradients,
    init_model,
    load_checkpoint,
    pillar_forward,
    project_nonneg,
    relative_gradient_error,
    save_checkpoint,
)
from .losses import (
    LossValue,
    PeripteralHyper,
    aug_regularizer,
    empirical_risk,
    gated_loss,
    margin_loss,
    mother_loss,
    pair_loss,
    param_loss,
    redn_regularizer,
    regression_loss,
    total_loss,
)
from .optimize import (
    GreedyTrace,
    greedy_max,
    k_centers,
    reservoir_sample,
    streaming_max,
    submod_min_heuristic,
)
from .sampling import (
    Pair,
    PairDataset,
    SampledSet,
    SamplerConfig,
    augment,
    build_pairs,
    dspn_feedback_sets,
    kmeans,
    load_pairs,
    sample_style1,
    sample_style2,
    save_pairs,
    target_feedback_sets,
)
from .training import (
    MetricsRow,
    OptimState,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    cyclic_lr,
    metrics_to_csv,
    train,
)
from .data import (
    SyntheticSpec,
    gen_synthetic,
    load_embeddings,
    load_embeddings_text,
    load_labels,
    save_embeddings,
    save_embeddings_text,
    save_labels,
)
from .config import ConfigError, RunConfig, parse_config
from .evaluation import (
    FeatureRankingReport,
    ImbalancedGroundSet,
    ProbeReport,
    TransferReport,
    feature_ranking_report,
    linear_probe,
    normalized_fl_eval,
    offline_design_eval,
    online_design_eval,
    transfer_report,
    zipf_duplicate,
)

__version__ = "0.1.0"
