"""
Numeric core: tensors with reverse-mode differentiation, layers and attention
"""
