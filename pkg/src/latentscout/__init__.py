"""Shortcut-feature detection for labeled image datasets.

Trains a Beta-VAE on a dataset, ranks latent dimensions by how strongly
they separate classes (max pairwise Wasserstein distance) and by linear-probe
predictiveness, and renders the visual evidence (traversals, extremes, density
curves) a human judge needs to call each candidate dimension a shortcut or a
valid feature. Discovered shortcuts can be turned into adversarial test sets.
"""

__version__ = "0.1.0"
