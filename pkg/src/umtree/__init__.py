"""Joint entity/relation triplet extraction with an unordered multi-tree decoder."""

__version__ = "0.1.0"
