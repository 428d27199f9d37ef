"""Online event-level anomaly detection for business process event streams.

An incoming event is anomalous when a next-activity predictor, trained on
a sliding window of recently completed cases, assigns it a probability
below a threshold. Isolation forest and LOF baselines share the same
streaming loop.
"""

from .encoding import Alphabet, FeatureVector, bucketize, encode_prefix
from .evalkit import SweepGrid, run_sweep, score_run
from .events import END, Case, Event, EventLog, parse_stream, read_stream, write_stream
from .pad import Verdict, detect
from .predictors import Hyperparameters, PredictionDistribution, predict, train
from .streaming import StreamConfig, run_stream, score_stream
from .synthlog import GeneratorConfig, default_loan_model, generate
from .unsupervised import OutlierHyperparameters, fit, score_event

__version__ = "0.1.0"

__all__ = [
    "Alphabet", "Case", "END", "Event", "EventLog", "FeatureVector", "GeneratorConfig",
    "Hyperparameters", "OutlierHyperparameters", "PredictionDistribution", "StreamConfig",
    "SweepGrid", "Verdict", "bucketize", "default_loan_model", "detect", "encode_prefix", "fit",
    "generate", "parse_stream", "predict", "read_stream", "run_stream", "run_sweep",
    "score_event", "score_run", "score_stream", "train", "write_stream",
]
