"""PRB-allocation simulator, GNN-REINFORCE trainer, explainer and evaluation."""

__version__ = "0.1.0"
