"""penstyle: pen-trajectory style extraction toolkit.

Pipeline: synthesize or ingest timed pen traces, quantize them into
direction-change/speed frame codes, train a conditioned GRU autoencoder
(or a writer/letter-embedding baseline) with teacher forcing, sample new
drawings with temperature softmax, and analyze results with BLEU/EoS
metrics and latent-space projections.
"""

__version__ = "0.1.0"
