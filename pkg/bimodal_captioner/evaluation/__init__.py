"""
Evaluation modules: tIoU, proposal precision/recall/F1 and BLEU
"""
