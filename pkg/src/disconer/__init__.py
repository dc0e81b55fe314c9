"""Transition-based recognition of discontinuous named entities."""

__version__ = "0.1.0"

from .corpus import (Category, Corpus, CorpusError, Fragment, Mention,
                     Sentence, canonicalize)
from .transitions import Action, ActionKind, ParserState, oracle, decode

__all__ = [
    "Category", "Corpus", "CorpusError", "Fragment", "Mention", "Sentence",
    "canonicalize", "Action", "ActionKind", "ParserState", "oracle", "decode",
]
