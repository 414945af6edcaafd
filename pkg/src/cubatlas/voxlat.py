"""Periodic binary voxel grids and the symmetry action on them.

The unit cell is the nondimensional cube [0,1)^3 discretized into n^3 voxels
(n divisible by 4), voxel centers at (i+0.5)/n.  A SymOp maps voxel index i
to i' = (W.i + c(W) + (n/4).t) mod n, where the per-row correction c(W) is -1
on rows of W with a negative entry; this keeps voxel centers exactly on
voxel centers for quarter-cell translations.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .symgroup import SpaceGroup, SymOp


class GridError(ValueError):
    pass


def _check_n(n: int) -> int:
    n = int(n)
    if n < 4 or n % 4:
        raise GridError(f"grid resolution must be >= 4 and divisible by 4, got {n}")
    return n


@dataclass
class VoxelGrid:
    """n^3 periodic binary occupancy field (True = solid)."""

    n: int
    occupancy: np.ndarray  # bool, shape (n, n, n), index order (x, y, z)

    def __post_init__(self):
        self.n = _check_n(self.n)
        occ = np.asarray(self.occupancy, dtype=bool)
        if occ.shape != (self.n, self.n, self.n):
            raise GridError(f"occupancy shape {occ.shape} != {(self.n,) * 3}")
        self.occupancy = occ

    @classmethod
    def full(cls, n: int) -> "VoxelGrid":
        return cls(n, np.ones((n, n, n), dtype=bool))

    @classmethod
    def empty(cls, n: int) -> "VoxelGrid":
        return cls(n, np.zeros((n, n, n), dtype=bool))

    def copy(self) -> "VoxelGrid":
        return VoxelGrid(self.n, self.occupancy.copy())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, VoxelGrid)
            and self.n == other.n
            and bool(np.array_equal(self.occupancy, other.occupancy))
        )

    def solid_count(self) -> int:
        return int(self.occupancy.sum())


def density(grid: VoxelGrid) -> float:
    return grid.solid_count() / grid.n**3


@lru_cache(maxsize=512)
def _op_permutation(n: int, op: SymOp) -> np.ndarray:
    """Flat index permutation p with p[flat(i)] = flat(i') for the op."""
    w = op.matrix
    corr = np.where((w < 0).any(axis=1), -1, 0)
    shift = (n // 4) * op.translation + corr
    idx = np.indices((n, n, n)).reshape(3, -1)  # (3, n^3), x-slowest (C order)
    mapped = (w @ idx + shift[:, None]) % n
    return np.ravel_multi_index(mapped, (n, n, n)).astype(np.int32)


def apply_op(grid: VoxelGrid, op: SymOp) -> VoxelGrid:
    """Image of the grid under one symmetry operator (a bijection on voxels)."""
    perm = _op_permutation(grid.n, op)
    out = np.empty(grid.n**3, dtype=bool)
    out[perm] = grid.occupancy.ravel()
    return VoxelGrid(grid.n, out.reshape(grid.occupancy.shape))


def map_index(n: int, op: SymOp, index) -> tuple:
    """Image of a single voxel index under the op (for tests/diagnostics)."""
    n = _check_n(n)
    w = op.matrix
    corr = np.where((w < 0).any(axis=1), -1, 0)
    i = (w @ np.asarray(index, dtype=np.int64) + corr + (n // 4) * op.translation) % n
    return tuple(int(x) for x in i)


def symmetrize(grid: VoxelGrid, group: SpaceGroup, mode: str = "intersection") -> VoxelGrid:
    """Project a grid onto the group-invariant configurations.

    intersection: voxel solid iff its whole orbit is solid.
    union: voxel solid iff any orbit member is solid.
    """
    if mode not in ("intersection", "union"):
        raise GridError(f"unknown symmetrize mode {mode!r}")
    acc = grid.occupancy.ravel().copy()
    src = grid.occupancy.ravel()
    for op in group.ops:
        perm = _op_permutation(grid.n, op)
        img = np.empty_like(src)
        img[perm] = src
        if mode == "union":
            acc |= img
        else:
            acc &= img
    return VoxelGrid(grid.n, acc.reshape(grid.occupancy.shape))


@dataclass(frozen=True)
class OrbitPartition:
    n: int
    group_number: int
    orbit_id: np.ndarray  # int32, shape (n^3,): voxel flat index -> orbit label
    orbit_count: int

    def members(self, label: int) -> np.ndarray:
        return np.nonzero(self.orbit_id == label)[0]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.orbit_id, minlength=self.orbit_count)


def orbits(n: int, group: SpaceGroup) -> OrbitPartition:
    """Partition of the n^3 voxels into orbits of the group action."""
    n = _check_n(n)
    rep = np.arange(n**3, dtype=np.int64)
    for op in group.ops:
        perm = _op_permutation(n, op)
        # orbit of v is {perm_op[v]}; the group is fully expanded, so one
        # minimum over all ops yields the canonical representative.
        np.minimum(rep, perm, out=rep)
    uniq, labels = np.unique(rep, return_inverse=True)
    return OrbitPartition(
        n=n,
        group_number=group.number,
        orbit_id=labels.astype(np.int32),
        orbit_count=len(uniq),
    )


@dataclass(frozen=True)
class ConnectivityReport:
    component_count: int
    largest_component_fraction: float
    percolates: tuple  # (x, y, z) booleans


class _OffsetUnionFind:
    """Union-find whose nodes carry integer lattice offsets to their root.

    Merging two nodes already in one component with inconsistent offsets
    means the component wraps around the torus; the mismatch axes mark
    winding directions.
    """

    def __init__(self, size: int):
        self.parent = np.arange(size, dtype=np.int64)
        self.rank = np.zeros(size, dtype=np.int8)
        self.offset = np.zeros((size, 3), dtype=np.int64)  # position(node) - position(root)

    def find(self, v: int):
        root = v
        path = []
        while self.parent[root] != root:
            path.append(root)
            root = self.parent[root]
        # path compression, accumulating offsets toward the root
        acc = np.zeros(3, dtype=np.int64)
        for node in reversed(path):
            acc += self.offset[node]
            self.offset[node] = acc.copy()
            self.parent[node] = root
        return root, self.offset[v].copy()

    def union(self, a: int, b: int, delta) -> np.ndarray:
        """Join a and b given position(b) = position(a) + delta.

        Returns the winding vector (nonzero where the merge closed a loop
        around the torus).
        """
        ra, oa = self.find(a)
        rb, ob = self.find(b)
        delta = np.asarray(delta, dtype=np.int64)
        if ra == rb:
            return oa + delta - ob
        if self.rank[ra] < self.rank[rb]:
            # attach ra under rb: offset(ra) = pos(ra) - pos(rb)
            self.parent[ra] = rb
            self.offset[ra] = ob - delta - oa
        elif self.rank[ra] > self.rank[rb]:
            self.parent[rb] = ra
            self.offset[rb] = oa + delta - ob
        else:
            self.parent[rb] = ra
            self.offset[rb] = oa + delta - ob
            self.rank[ra] += 1
        return np.zeros(3, dtype=np.int64)


@dataclass(frozen=True)
class ComponentMap:
    """Periodic components: per-voxel label (0 = void) plus per-component data."""

    labels: np.ndarray  # int32, shape (n, n, n), 1..count
    sizes: np.ndarray  # voxel count per component, index = label - 1
    winding: np.ndarray  # bool (count, 3): torus winding per component and axis

    @property
    def count(self) -> int:
        return len(self.sizes)


def periodic_component_map(grid: VoxelGrid) -> ComponentMap:
    """Label face-connected solid components on the periodic torus.

    Components are found box-wise (scipy.ndimage.label) and then merged
    across the three wrap faces with an offset union-find; a merge whose
    accumulated displacement mismatches by a nonzero vector marks winding
    around the torus in the nonzero axes.
    """
    from scipy import ndimage

    n = grid.n
    box_labels, n_box = ndimage.label(grid.occupancy)  # 6-connectivity
    if n_box == 0:
        return ComponentMap(
            labels=box_labels.astype(np.int32),
            sizes=np.zeros(0, dtype=np.int64),
            winding=np.zeros((0, 3), dtype=bool),
        )

    uf = _OffsetUnionFind(n_box + 1)
    winding_of = {}  # box-label root -> bool[3]
    for axis in range(3):
        hi = [slice(None)] * 3
        lo = [slice(None)] * 3
        hi[axis], lo[axis] = n - 1, 0
        a = box_labels[tuple(hi)].ravel()
        b = box_labels[tuple(lo)].ravel()
        mask = (a > 0) & (b > 0)
        delta = np.zeros(3, dtype=np.int64)
        delta[axis] = n  # frame of b is one period over
        for la, lb in set(zip(a[mask].tolist(), b[mask].tolist())):
            wind = uf.union(la, lb, delta)
            if np.any(wind):
                root, _ = uf.find(la)
                w = winding_of.setdefault(root, np.zeros(3, dtype=bool))
                w |= wind != 0

    # winding flags may be keyed by stale roots; remap everything once
    roots = np.zeros(n_box + 1, dtype=np.int64)
    for lab in range(1, n_box + 1):
        roots[lab], _ = uf.find(lab)
    final_winding = {}
    for lab, w in winding_of.items():
        root = roots[lab]
        acc = final_winding.setdefault(root, np.zeros(3, dtype=bool))
        acc |= w

    uniq = np.unique(roots[1:])
    compact = np.zeros(n_box + 1, dtype=np.int32)
    compact[1:] = np.searchsorted(uniq, roots[1:]) + 1
    labels = compact[box_labels]

    box_sizes = np.bincount(box_labels.ravel(), minlength=n_box + 1)
    sizes = np.zeros(len(uniq), dtype=np.int64)
    np.add.at(sizes, compact[1:] - 1, box_sizes[1:])
    winding = np.zeros((len(uniq), 3), dtype=bool)
    for root, w in final_winding.items():
        winding[np.searchsorted(uniq, root)] = w
    return ComponentMap(labels=labels, sizes=sizes, winding=winding)


def periodic_components(grid: VoxelGrid) -> ConnectivityReport:
    """Face-connected components of the solid phase on the periodic torus."""
    cmap = periodic_component_map(grid)
    if cmap.count == 0:
        return ConnectivityReport(0, 0.0, (False, False, False))
    return ConnectivityReport(
        component_count=cmap.count,
        largest_component_fraction=float(cmap.sizes.max()) / grid.solid_count(),
        percolates=tuple(bool(x) for x in cmap.winding.any(axis=0)),
    )
