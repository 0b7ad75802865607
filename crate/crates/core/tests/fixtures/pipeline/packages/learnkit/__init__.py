"""Toy machine-learning estimators."""
