"""Relation extraction over a relation hierarchy with RL bag denoising.

Modules:
    numeric     fp64 tensor helpers, parameters, Adam, gradient check, RNG, tensor files
    corpus      sentences, bags, relation taxonomy, corpus I/O, synthetic generator
    embeddings  embedding tables, TransE
    encoder     piecewise CNN sentence encoder
    detector    REINFORCE instance selector
    hrs         relation tree, gated memory, scoring, decoding, ranking loss
    pipeline    configuration, training stages, evaluation, checkpoints
"""
from .corpus import Bag, Sentence, Taxonomy, generate_synthetic, load_corpus
from .pipeline import Config, Model, evaluate, init_model, load_model, save_model, train

__all__ = ["Bag", "Sentence", "Taxonomy", "generate_synthetic", "load_corpus", "Config", "Model",
           "evaluate", "init_model", "load_model", "save_model", "train"]
__version__ = "0.1.0"
