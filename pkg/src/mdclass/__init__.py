"""Imputation, t-test feature selection and binary classifiers for incomplete data."""

from .classifiers import SVC, GaussianNB, LinearDiscriminantAnalysis, LogisticRegression
from .dataset import Dataset, load_csv
from .evaluation import cross_validate, grid_evaluate
from .imputation import EMImputer, KNNImputer, MeanImputer
from .numerics import RandomStream
from .selection import TTestSelector

__all__ = [
    "Dataset",
    "load_csv",
    "RandomStream",
    "MeanImputer",
    "KNNImputer",
    "EMImputer",
    "TTestSelector",
    "LogisticRegression",
    "GaussianNB",
    "LinearDiscriminantAnalysis",
    "SVC",
    "cross_validate",
    "grid_evaluate",
]

__version__ = "0.1.0"
