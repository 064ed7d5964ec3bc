"""Causal-graph-gated temporal GNN pipeline for wildfire danger forecasting.

Subpackages cover the full workflow on synthetic climate-driver data:
structural-causal-model generation, PCMCI link discovery, adjacency
construction, recurrent/graph model training with imbalance-aware
resampling, AUPRC/AUROC evaluation, and Shapley-value attribution.
"""

__version__ = "0.1.0"
