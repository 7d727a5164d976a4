"""
Data modules: features, annotations, vocabulary, batching and synthetic datasets
"""
