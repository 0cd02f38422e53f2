"""Sparse-explanatory dynamic EEG-graph network.

Multichannel time series become dynamic graph sequences (spectral node
trajectories, absolute-Pearson edge trajectories); a shared-parameter temporal
attention encoder fuses them; Laplacian eigenvector coordinates inject
topology into the node embeddings; a node-guided binary-concrete edge mask
learns a sparse explanatory subgraph; and a gated graph-attention predictor
classifies on the masked connectivity. Training couples cross-entropy with a
Bernoulli-retention KL on the mask.
"""

from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
