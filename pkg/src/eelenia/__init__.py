"""Goal-directed and novelty-driven exploration of Flow Lenia in embedding spaces."""

__version__ = "0.1.0"
