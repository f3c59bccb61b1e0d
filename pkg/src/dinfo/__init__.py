"""Directed-information estimation and interaction-graph inference.

The package turns multichannel recordings into statistically controlled
directed interaction graphs: quantized per-segment features feed shrinkage
regularized multinomial logit models, whose predictive entropies give a
plug-in directed-information estimate; permutation bootstraps calibrate
p-values, and a corrected Benjamini-Hochberg rule controls the FDR of the
resulting edge set.  Downstream helpers cluster, embed, and classify the
DI matrices.
"""

from .analysis import (
    DistanceMatrix,
    LabeledCorpus,
    choose_k_elbow,
    embedding_stress,
    heat_kernel_distance,
    kmeans,
    knn_classify,
    mds,
    roc_auc,
    roc_points,
)
from .estimator import (
    DiEstimate,
    DiMatrix,
    LocalDiSurface,
    coherence_measure,
    delta_trajectory,
    estimate_di,
    estimate_mi,
    granger_measure,
    local_di,
)
from .inference import (
    Edge,
    InteractionGraph,
    PValueMatrix,
    bh_corrected,
    bootstrap_null_stats,
    build_graph,
    p_value,
)
from .logit import (
    ClassDistribution,
    ConditioningDesign,
    ShrinkageLogitModel,
    build_design,
    fit_ml,
    optimize_lambda,
    predict,
    shrink,
    shrinkage_target,
)
from .pipeline import ChannelData, PipelineConfig, estimate_matrix, preprocess_recording
from .signals import (
    Codebook,
    FeatureSequence,
    QuantizedSequence,
    Recording,
    bandpass_notch,
    load_recording,
    quantize,
    segment_features,
    train_lloyd_max,
)
from .synthetic import (
    GeneratorSpec,
    MarkovPairLaw,
    brute_force_di,
    exact_di,
    flip_chain_law,
    generate,
    independent_pair_law,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelData",
    "ClassDistribution",
    "Codebook",
    "ConditioningDesign",
    "DiEstimate",
    "DiMatrix",
    "DistanceMatrix",
    "Edge",
    "FeatureSequence",
    "GeneratorSpec",
    "InteractionGraph",
    "LabeledCorpus",
    "LocalDiSurface",
    "MarkovPairLaw",
    "PValueMatrix",
    "PipelineConfig",
    "QuantizedSequence",
    "Recording",
    "ShrinkageLogitModel",
    "bandpass_notch",
    "bh_corrected",
    "bootstrap_null_stats",
    "brute_force_di",
    "build_design",
    "build_graph",
    "choose_k_elbow",
    "coherence_measure",
    "delta_trajectory",
    "embedding_stress",
    "estimate_di",
    "estimate_matrix",
    "estimate_mi",
    "exact_di",
    "fit_ml",
    "flip_chain_law",
    "generate",
    "granger_measure",
    "heat_kernel_distance",
    "independent_pair_law",
    "kmeans",
    "knn_classify",
    "load_recording",
    "local_di",
    "mds",
    "optimize_lambda",
    "p_value",
    "predict",
    "preprocess_recording",
    "quantize",
    "roc_auc",
    "roc_points",
    "segment_features",
    "shrink",
    "shrinkage_target",
    "train_lloyd_max",
]
