"""Bounding volume hierarchy over triangles.

Morton-sorted leaves under an implicit complete binary tree: leaf slots
are padded to a power of two with empty boxes, node 0 is the root and
node i's children are 2i+1 and 2i+2. The build is fully vectorized, the
traversal happens inside the compiled render kernels with an explicit
stack. Tree quality is modest but heightfield meshes are spatially
coherent, so it performs well enough at interactive build times.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF_SIZE = 4


def _morton3(q: np.ndarray) -> np.ndarray:
    """Interleave 10-bit integer coords into 30-bit Morton codes."""
    out = np.zeros(len(q), dtype=np.uint64)
    for axis in range(3):
        v = q[:, axis].astype(np.uint64)
        v = (v | (v << 16)) & np.uint64(0x030000FF)
        v = (v | (v << 8)) & np.uint64(0x0300F00F)
        v = (v | (v << 4)) & np.uint64(0x030C30C3)
        v = (v | (v << 2)) & np.uint64(0x09249249)
        out |= v << np.uint64(axis)
    return out


@dataclass
class BVH:
    node_min: np.ndarray    # (nodes, 3)
    node_max: np.ndarray    # (nodes, 3)
    leaf_start: np.ndarray  # (leaves,) offsets into tri_order
    leaf_count: np.ndarray  # (leaves,)
    tri_order: np.ndarray   # triangle indices grouped by leaf
    first_leaf: int         # node index of the first leaf slot


def build_bvh(v0: np.ndarray, e1: np.ndarray, e2: np.ndarray) -> BVH:
    n = len(v0)
    pts = np.stack([v0, v0 + e1, v0 + e2], axis=1)
    tri_min = pts.min(axis=1)
    tri_max = pts.max(axis=1)
    centroid = 0.5 * (tri_min + tri_max)

    lo = centroid.min(axis=0)
    span = centroid.max(axis=0) - lo
    span[span == 0] = 1.0
    quant = np.clip((centroid - lo) / span * 1023.0, 0, 1023).astype(np.uint32)
    order = np.argsort(_morton3(quant), kind="stable").astype(np.int64)

    n_leaves = max(1, -(-n // LEAF_SIZE))
    n_slots = 1 << int(np.ceil(np.log2(n_leaves)))
    first_leaf = n_slots - 1
    n_nodes = 2 * n_slots - 1

    node_min = np.full((n_nodes, 3), np.inf)
    node_max = np.full((n_nodes, 3), -np.inf)
    leaf_start = np.zeros(n_slots, dtype=np.int64)
    leaf_count = np.zeros(n_slots, dtype=np.int64)

    starts = np.arange(n_leaves) * LEAF_SIZE
    counts = np.minimum(LEAF_SIZE, n - starts)
    leaf_start[:n_leaves] = starts
    leaf_count[:n_leaves] = counts

    pad = n_leaves * LEAF_SIZE - n
    smin = np.vstack([tri_min[order], np.full((pad, 3), np.inf)])
    smax = np.vstack([tri_max[order], np.full((pad, 3), -np.inf)])
    lmin = smin.reshape(n_leaves, LEAF_SIZE, 3).min(axis=1)
    lmax = smax.reshape(n_leaves, LEAF_SIZE, 3).max(axis=1)
    # inflate: axis-aligned geometry yields zero-thickness boxes whose slab
    # interval is a single point, rejecting rays that graze within rounding
    eps = 1e-9 * (1.0 + np.maximum(np.abs(lmin), np.abs(lmax)))
    node_min[first_leaf:first_leaf + n_leaves] = lmin - eps
    node_max[first_leaf:first_leaf + n_leaves] = lmax + eps

    # internal bounds bottom-up, one vectorized pass per level
    level_start = first_leaf
    while level_start > 0:
        parent_start = (level_start - 1) // 2
        parents = np.arange(parent_start, level_start)
        left = 2 * parents + 1
        right = left + 1
        node_min[parents] = np.minimum(node_min[left], node_min[right])
        node_max[parents] = np.maximum(node_max[left], node_max[right])
        level_start = parent_start

    return BVH(node_min=node_min, node_max=node_max, leaf_start=leaf_start,
               leaf_count=leaf_count, tri_order=order, first_leaf=first_leaf)
