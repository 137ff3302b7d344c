"""Bilingual (Latin/CJK) CTC speech recognition toolkit at desk scale.

Pipeline pieces: mixed-script grapheme vocabulary, exact CTC loss and
gradient, Kneser-Ney n-gram language model with ARPA I/O, prefix beam
search with shallow fusion, log-spectrogram features, a small recurrent
acoustic model trained with SGD + Nesterov momentum, error-rate metrics,
and a deterministic synthetic bilingual data generator.
"""

__version__ = "0.1.0"
