"""
Model modules: bi-modal encoder, decoder, captioner and proposal generator
"""
