"""Cumulative-logit multidimensional analysis of multivariate ordinal data."""

__version__ = "0.1.0"

from .estimators import CLMDU, CLPCA, CLRMDU, CLRRR  # noqa: E402

__all__ = ["CLPCA", "CLRRR", "CLMDU", "CLRMDU", "__version__"]
