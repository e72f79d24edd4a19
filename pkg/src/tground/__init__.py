"""Compositional temporal grounding: query decomposition, cross-modal
matching with temporal refinement, triplet-loss training, and a
multi-annotator recall/IoU evaluation harness, all on a small numpy
reverse-mode autodiff core."""

__version__ = "0.1.0"
