"""Physics-informed network training for nonlinear PDE benchmarks with
adversarial-training, weight-decay, and Gaussian-smoothing regimes."""

from . import harness, jets, network, problems, sampling, tape, training

__all__ = [
    "harness", "jets", "network", "problems", "sampling", "tape", "training",
]

__version__ = "0.1.0"
