from .tiger import build_tiger_model, tiger_frames, tiger_tensors

__all__ = ["build_tiger_model", "tiger_frames", "tiger_tensors"]
