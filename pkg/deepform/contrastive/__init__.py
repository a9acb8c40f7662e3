from .contrastive_engine import ContrastBatch, ContrastiveEngine

__all__ = ['ContrastBatch', 'ContrastiveEngine']
