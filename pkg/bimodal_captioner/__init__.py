"""
Bi-modal Captioner - Dense event captioning over parallel audio and visual feature streams
"""

__version__ = "0.1.0"
