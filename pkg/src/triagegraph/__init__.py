"""Patient triage over feature-similarity graphs.

Pipeline: load + preprocess tabular patient data, build a weighted
similarity graph, train graph neural networks for 4-level triage node
classification, and serve inductive predictions for newly arriving
patients over HTTP.
"""

__version__ = "0.1.0"
