"""featlab: train small text classifiers, explain their learned features as
word-cloud data, collect relevance judgments, disable rejected features behind
an output-layer mask, fine-tune, and measure the effect on accuracy and
group-fairness metrics."""

from .corpus import (
    Dataset,
    Document,
    EmbeddingTable,
    Vocabulary,
    encode,
    load_dataset,
    load_embeddings,
    tokenize,
)
from .cnn import (
    CnnConfig,
    ForwardTrace,
    ModelSnapshot,
    disable_features,
    finetune_head,
    forward,
    init_model,
    predict,
    train,
)
from .bilstm import BilstmConfig, BilstmModel
from .optim import TrainConfig, TrainingDiverged
from .lrp import LrpConfig, RelevanceVector, feature_relevance_bilstm, feature_relevance_cnn, lrp_linear_backward
from .features import (
    FeatureProfile,
    WordCloudData,
    bilstm_cloud_pair,
    build_clouds,
    cloud_data,
    profile_features,
    rank_features,
    score_binary_answer,
    score_multiclass_answer,
    suggested_class,
)
from .feedback import (
    Answer,
    FeedbackSession,
    Question,
    aggregate_majority,
    create_session,
    decide_disable_lexicon,
    decide_disable_majority,
    simulate_annotator,
    simulate_session_answers,
)
from .evaluation import (
    BiasReport,
    MetricsReport,
    SubpopulationSpec,
    approx_randomization_test,
    bias_metrics,
    evaluate,
    gender_subpopulations,
    subpop_membership,
)
from .snapshot import SnapshotError, load_snapshot, model_id, save_snapshot

__version__ = "0.1.0"
