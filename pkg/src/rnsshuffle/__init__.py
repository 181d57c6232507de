"""Shuffle-model federated learning lab: RNS bit-level shuffling, reconstruction attacks, costs."""

__version__ = "0.1.0"
