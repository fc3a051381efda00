"""Sentiment classification toolkit: embeddings, hybrid CNN/BiLSTM models, grid search.

Everything is implemented on NumPy arrays with explicit forward/backward
passes; the hot inner loops additionally ship numba-compiled kernels (see
`sentikit.backend` for how the backend is selected).
"""

__version__ = "0.1.0"

from sentikit.backend import active_backend

__all__ = ["active_backend", "__version__"]
