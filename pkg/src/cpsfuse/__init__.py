"""cpsfuse: multimodal utterance-classification toolkit.

Corpus preparation, acoustic-prosodic features, classical (TF-IDF + random
forest) and neural (dual BiLSTM + self-attention late fusion) classifiers,
plus evaluation reports and a batch experiment CLI.
"""

__version__ = "0.1.0"
