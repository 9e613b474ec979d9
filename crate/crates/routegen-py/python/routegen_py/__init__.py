from .routegen_py import (
    Command,
    Generator,
    WorldMap,
    bleu_corpus,
    bleu_sentence,
    token_distance,
)

__all__ = [
    "Command",
    "Generator",
    "WorldMap",
    "bleu_corpus",
    "bleu_sentence",
    "token_distance",
]
