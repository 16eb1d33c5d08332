"""Two-stage multimodal prognostic engine.

Stage 1 stratifies patients into low/high risk with a stacked ensemble over
clinical biomarkers and reduced image features; stage 2 converts the base
learners' probability scores for high-risk patients into a calibrated death
probability through a logistic nomogram.
"""

__version__ = "0.1.0"
