"""Saliency generators and diagnostic properties for explanations."""

from .adapters import (
    ConstantAdapter,
    LinearBagAdapter,
    ModelAdapter,
    TokenInstance,
    build_vocab,
    count_matrix,
    random_init_adapter,
    train_bag_adapter,
)
from .properties import (
    DEFAULT_THRESHOLDS,
    DiagnosticsReport,
    confidence_indication,
    consistency_rho,
    dataset_consistency,
    faithfulness_auctp,
    human_agreement_map,
    rationale_consistency,
    rationale_consistency_from_tables,
    saliency_distance_features,
    select_pairs,
    upsample_by_decile,
)
from .saliency import (
    generate_saliency,
    random_saliency,
    saliency_gradient,
    saliency_occlusion,
    saliency_shapley_sampling,
)

__all__ = [
    "ConstantAdapter",
    "DEFAULT_THRESHOLDS",
    "DiagnosticsReport",
    "LinearBagAdapter",
    "ModelAdapter",
    "TokenInstance",
    "build_vocab",
    "confidence_indication",
    "consistency_rho",
    "count_matrix",
    "dataset_consistency",
    "faithfulness_auctp",
    "generate_saliency",
    "human_agreement_map",
    "random_init_adapter",
    "random_saliency",
    "rationale_consistency",
    "rationale_consistency_from_tables",
    "saliency_distance_features",
    "saliency_gradient",
    "saliency_occlusion",
    "saliency_shapley_sampling",
    "select_pairs",
    "train_bag_adapter",
    "upsample_by_decile",
]
