"""maskforge: topology-preserving binary-mask editing, condition export,
and reference DIS evaluation metrics for synthetic dataset generation."""

__version__ = "0.1.0"
