"""Audits of multilevel logistic-regression classifiers."""

__version__ = "0.1.0"
