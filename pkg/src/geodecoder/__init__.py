"""Decoder-only generative modeling with manifold-valued latents."""

from .manifolds import (
    DegenerateInput,
    Euclidean,
    Lorentz,
    Manifold,
    ManifoldSpec,
    MetricAt,
    NonUniqueLog,
    Product,
    Sphere,
    UnsupportedSampling,
    build_manifold,
    lorentz_to_poincare,
    poincare_distance,
    poincare_to_lorentz,
)
from .decoder import (
    BCE,
    MSE,
    AdamState,
    DecoderParams,
    InvalidTarget,
    ShapeError,
    adam_step,
    backward,
    forward,
    init_decoder,
    load_decoder,
    loss,
    lr_schedule,
    save_decoder,
)
from .latents import LatentTable, RAdamState, init_latents, radam_step, stabilize
from .noise import NoiseConfig, add_geometric_noise, jacobian, local_noise_std, regularizer_trace, verify_noise_penalty
from .data import (
    BranchingConfig,
    Dataset,
    Tree,
    generate_branching_diffusion,
    load_dataset,
    split,
    standardize,
    tree_distance,
)
from .metrics import (
    UndefinedCorrelation,
    distance_correlations,
    pearson,
    reconstruction_metrics,
    spearman,
)
from .training import (
    RunArtifacts,
    TrainConfig,
    TrainingDiverged,
    ablation_sweep,
    generate,
    infer_latents,
    train,
)

__version__ = "0.1.0"
