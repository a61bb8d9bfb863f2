"""Cold-start cumulative-error benchmark: select, guess, reveal, learn."""
from guesslearn.acquisition import Strategy, select
from guesslearn.kernels import BACKEND
from guesslearn.learners import KNN, MLP, Perceptron, SoftmaxHead, UniformLearner, make_learner
from guesslearn.protocol import (
    Pool,
    Schedule,
    TrackConfig,
    Trajectory,
    cumulative_error,
    perceptron_mistake_bound,
    random_baseline_expectation,
    run_episode,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "KNN",
    "MLP",
    "Perceptron",
    "Pool",
    "Schedule",
    "SoftmaxHead",
    "Strategy",
    "TrackConfig",
    "Trajectory",
    "UniformLearner",
    "cumulative_error",
    "make_learner",
    "perceptron_mistake_bound",
    "random_baseline_expectation",
    "run_episode",
    "select",
]
