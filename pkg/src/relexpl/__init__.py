"""Bag-level relation extraction under distant supervision, with explanations.

The package trains two importance-weighting bag models over a minimal
reverse-mode tensor engine, augments training bags with sampled distractor
sentences, scores sentence importance four ways (attention, saliency,
gradient x input, leave-one-out), and evaluates both extraction accuracy
(PR curve / truncated AUC) and explanation quality (rank correlation
against annotated sentence orderings).
"""

__version__ = "0.1.0"
