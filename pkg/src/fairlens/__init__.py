"""fairlens: audit learned representations for disentanglement and fairness."""

from .core import (
    Dataset,
    FactorAssignment,
    FactorSpace,
    RepresentationSource,
    RNG_ALGORITHM,
    make_rng,
    sample_batch,
    sample_factors,
)
from .estimators import (
    DiscreteDistribution,
    MIMatrix,
    discretize,
    entropy,
    mi_matrix,
    mutual_information,
    spearman,
    total_variation,
)
from .classifiers import (
    GbtConfig,
    GbtModel,
    LinearModel,
    gbt_feature_importance,
    gbt_predict,
    majority_vote,
    train_gbt,
    train_linear,
)
from .metrics import (
    DisentanglementReport,
    MetricBudget,
    betavae_score,
    compute_all_metrics,
    dci_disentanglement,
    factorvae_score,
    mig,
    modularity,
    sap_score,
)
from .fairness import (
    FairnessReport,
    Task,
    enumerate_tasks,
    prediction_distribution,
    task_unfairness,
    train_downstream,
    unfairness_score,
)
from .analysis import (
    CorrelationTable,
    ModelRecord,
    correlation_table,
    knn_adjust,
    model_selection_experiment,
)
from .worlds import (
    EncoderSpec,
    MinMixingWorld,
    build_encoder,
    standard_family,
)

__version__ = "0.1.0"
