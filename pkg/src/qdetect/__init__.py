"""Teacher question detection from classroom transcripts.

Two-way (question vs. non-question) and five-way (KQ/OQ/PQ/DQ/NQ) detection
with a small transformer encoder whose [CLS] state feeds either a softmax
head or M per-class sigmoid heads trained with summed binary cross-entropy.
"""
__version__ = "0.1.0"
