"""
Training modules: losses, target assignment, optimizer and the two-stage procedure
"""
