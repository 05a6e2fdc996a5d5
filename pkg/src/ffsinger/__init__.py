"""Feed-forward transformer singing synthesizer.

Pipeline: a musical score is parsed and aligned by a rule-based phoneme
duration model, per-phoneme encoder states are repeated to frame rate with
F0 and note-position conditioning, and a feed-forward decoder with
Gaussian-biased self-attention maps the result to acoustic feature frames.
"""

__version__ = "0.1.0"
