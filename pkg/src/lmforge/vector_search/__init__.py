"""In-process vector index with two backends behind one interface:
an exact flat scan and an HNSW approximate graph, both cosine-only over
normalized vectors, with metadata filtering and bit-exact persistence.
"""

from .base import IndexedDocument, SearchHit, build_filter
from .flat import FlatIndex
from .hnsw import HnswIndex, HnswParams
from .io import load_index, save_index

__all__ = [
    "IndexedDocument",
    "SearchHit",
    "FlatIndex",
    "HnswIndex",
    "HnswParams",
    "load_index",
    "save_index",
    "build_filter",
]
