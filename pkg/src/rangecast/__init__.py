"""Forecasting lab: numpy LSTM with BPTT, random-walk model, and
window-length x prediction-range backtests."""

from .numeric import ParameterError, SeededRng, ShapeError

__version__ = "0.1.0"

__all__ = ["ParameterError", "SeededRng", "ShapeError", "__version__"]
