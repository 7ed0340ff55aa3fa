"""Multi-resolution node embeddings from a single GCN trained on a coarsened graph."""

__version__ = "0.1.0"
