"""Multiple-choice reading comprehension via summary matching.

Each candidate answer is filled into the question's placeholder to form a
complete summary sentence; the passage and summary are jointly encoded and
scored, and the five option scores share one softmax.
"""

from .compose import (
    ComposedInput,
    InputMode,
    Summary,
    TruncationReport,
    compose_all_options,
    compose_input,
    fill_placeholder,
    truncate,
)
from .data import (
    EXPECTED_COUNTS,
    NUM_OPTIONS,
    PLACEHOLDER,
    McqaExample,
    SplitStats,
    dataset_stats,
    load_and_audit,
    load_dataset,
    save_dataset,
)
from .encoder import (
    EncoderConfig,
    HiddenStates,
    TinyTransformerEncoder,
    build_encoder,
    encode,
    segment_pool,
)
from .errors import (
    CheckpointError,
    ComposeError,
    ConfigError,
    DatasetError,
    EvaluationError,
    SummatchError,
    TrainingError,
    ValidationError,
)
from .evaluate import (
    AblationReport,
    GeneralizationReport,
    Metrics,
    cross_evaluate,
    evaluate,
    run_ablation,
)
from .head import (
    OptionScorerHead,
    OptionScores,
    batch_nll,
    nll_loss,
    option_distribution,
    score_option,
)
from .analyze import PredictionRecord, emit_report, prediction_record
from .config import RunConfig
from .model import SummaryMatcher, load_checkpoint, save_checkpoint
from .synthetic import chance_level_examples, separable_examples
from .tokenizer import Tokenizer, WhitespaceHashTokenizer
from .train import TrainConfig, TrainHistory, TrainResult, Trainer, train

__version__ = "0.1.0"
