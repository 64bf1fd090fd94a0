"""Transaction-graph money laundering detection.

Stages: ingest raw transaction files, reduce the account scope, build
the weighted directed graph, construct fuzzy per-seed communities in
parallel, compute feature vectors, score them with an isolation forest,
and evaluate alerts with a context-weighted confusion matrix.
"""

__version__ = "0.1.0"
