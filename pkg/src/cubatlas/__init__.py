"""Symmetric cubic microstructure atlas: generation, homogenization, analysis.

Modules:
  symgroup  exact operators of the cubic space groups 195-230
  voxlat    periodic voxel grids, symmetry action, orbits, percolation
  genesis   seeded symmetric structure generation at a target density
  homog     periodic voxel FEM homogenization (matrix-free PCG)
  elastica  elastic descriptors, Hashin-Shtrikman bounds, classification
  stats     Kruskal-Wallis rank tests with tie correction and effect sizes
  atlas_io  dataset container, exports, and the resumable batch pipeline
"""

from . import atlas_io, elastica, genesis, homog, stats, symgroup, voxlat

__version__ = "1.0.0"

__all__ = [
    "atlas_io",
    "elastica",
    "genesis",
    "homog",
    "stats",
    "symgroup",
    "voxlat",
    "__version__",
]
