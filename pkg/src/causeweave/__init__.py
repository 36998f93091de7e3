"""causeweave: emotion-cause pair extraction for conversations.

Three-stage pipeline: embedding plus emotion-logit fusion, causality-matrix
extraction from transformer self-attention, and QA-style cause-span
resolution, together with the strict/proportional span evaluation suite.
"""

__version__ = "0.1.0"
