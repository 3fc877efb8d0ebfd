"""Phase-synchronized convolutional classifier with key/query-derived
Kuramoto couplings, plus its datasets, baseline, training harness and
evaluation protocol."""

__version__ = "0.1.0"
