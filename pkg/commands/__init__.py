from . import analysis, baseline, bench, search, train

__all__ = ["analysis", "baseline", "bench", "search", "train"]
