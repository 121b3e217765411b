"""Pool-based active learning with optimal-transport acquisition and
barycentric over-sampling, at desk scale."""

__version__ = "0.1.0"

from .barysample import AugmentationConfig, SyntheticExample, augment_l2_kde, augment_wasserstein
from .coreset import SelectionState, brute_force_opt, greedy_select, objective_L
from .data import (
    Corpus,
    FeaturizerConfig,
    SeedSpec,
    SynthSpec,
    build_seed,
    export_jsonl,
    featurize_text,
    ingest_jsonl,
    make_synthetic,
    train_val_split,
)
from .gradspace import DistanceMatrix, GradientMeasure, pairwise_wasserstein
from .harness import ExperimentConfig, RunRecord, run_experiment, run_sweep
from .model import (
    ClassifierHead,
    ExampleEmbedding,
    SoftLabel,
    last_layer_gradients,
    load_head,
    predict_proba,
    save_head,
    train,
)
from .report import report, validate_svg
from .stats import bonferroni, f1_macro, f1_target, wilcoxon_signed_rank
from .strategies import OTConfig, acquire
from .transport import (
    CostMatrix,
    DiscreteMeasure,
    TransportPlan,
    barycenter_support_size,
    exact_distance_oracle,
    ground_cost,
    sinkhorn_distance,
    wasserstein_barycenter,
)

__all__ = [
    "AugmentationConfig", "SyntheticExample", "augment_l2_kde", "augment_wasserstein",
    "SelectionState", "brute_force_opt", "greedy_select", "objective_L",
    "Corpus", "FeaturizerConfig", "SeedSpec", "SynthSpec", "build_seed",
    "export_jsonl", "featurize_text", "ingest_jsonl", "make_synthetic",
    "train_val_split",
    "DistanceMatrix", "GradientMeasure", "pairwise_wasserstein",
    "ExperimentConfig", "RunRecord", "run_experiment", "run_sweep",
    "ClassifierHead", "ExampleEmbedding", "SoftLabel", "last_layer_gradients",
    "load_head", "predict_proba", "save_head", "train",
    "report", "validate_svg",
    "bonferroni", "f1_macro", "f1_target", "wilcoxon_signed_rank",
    "OTConfig", "acquire",
    "CostMatrix", "DiscreteMeasure", "TransportPlan", "barycenter_support_size",
    "exact_distance_oracle", "ground_cost", "sinkhorn_distance",
    "wasserstein_barycenter",
    "__version__",
]
