"""
Services for atomic file output and checkpoint storage
"""
