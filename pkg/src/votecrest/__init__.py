"""Majority-vote ensembles of adversarially trained classifiers.

Library plus CLI harness: tiny dense networks, adversarial training
objectives, projected-gradient attacks against single models and voting
ensembles, pool-based model-subset selection, and a perturbation-cosine
diversity metric.
"""

__version__ = "0.1.0"
