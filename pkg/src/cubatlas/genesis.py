"""Seeded stochastic symmetric erosion of the full-solid unit cell.

Erosion removes whole symmetry orbits from the full grid, so every
intermediate state is exactly group-invariant.  The removal order follows a
smoothed periodic random field (orbit-averaged before and after smoothing,
keeping it exactly orbit-constant): depending on the attempt, survivors are
either a shell around the field's median level set or the field's superlevel
set, both connected morphologies rather than disconnected dust.  After the
density target is crossed, disconnected satellite fragments are trimmed by
keeping the unique largest component that winds around the torus in all
three axes; uniqueness makes the kept component group-invariant.  Attempts
whose trimmed grid fails validation retry with a derived sub-key, alternating
morphology and correlation length.

Randomness comes from numpy's Philox counter-based generator keyed on
(seed, attempt), never the platform default, so results are reproducible
across platforms.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.ndimage import gaussian_filter

from .symgroup import SpaceGroup, group
from .voxlat import (
    ConnectivityReport,
    VoxelGrid,
    apply_op,
    density,
    orbits,
    periodic_component_map,
    periodic_components,
)

MIN_DENSITY = 0.05  # structures below this are filtered from datasets

# Retry schedule: each attempt draws fresh noise and alternates between two
# survivor morphologies (shell = level set of the field, blob = superlevel
# set) over a ladder of correlation lengths.  Non-symmorphic groups force the
# symmetric field to high spatial frequency, where a median shell fragments
# at low density but the superlevel labyrinth stays connected, and vice versa
# for the symmorphic groups, so cycling both covers all 36 groups.
_SIGMA_LADDER = (0.25, 0.12, 0.18, 0.09, 0.35, 0.06)


class GenerationError(RuntimeError):
    def __init__(self, message, last_report=None):
        super().__init__(message)
        self.last_report = last_report


@dataclass(frozen=True)
class GenSpec:
    group_number: int
    n: int = 64
    target_density: float = 0.3
    seed: int = 0
    require_percolation: bool = True
    max_attempts: int = 20
    allow_low_density: bool = False

    def __post_init__(self):
        if not (0.0 < self.target_density <= 1.0):
            raise ValueError(f"target_density must be in (0,1], got {self.target_density}")
        if self.n < 4 or self.n % 4:
            raise ValueError(f"n must be >= 4 and divisible by 4, got {self.n}")
        if self.target_density < MIN_DENSITY and not self.allow_low_density:
            warnings.warn(
                f"target density {self.target_density} < {MIN_DENSITY}: such structures "
                "are normally filtered out; pass allow_low_density to silence",
                stacklevel=2,
            )


@dataclass
class GenResult:
    grid: VoxelGrid
    achieved_density: float
    attempts_used: int
    orbit_removals: int
    seed: int
    # True when tied winding nets were re-joined by re-adding removed orbits;
    # only then may achieved_density exceed the target (capped at 2x).
    bridged: bool = False


@dataclass
class ValidityReport:
    symmetric: bool
    density_ok: bool
    single_component: bool
    percolates: tuple
    connectivity: ConnectivityReport = field(repr=False, default=None)

    def valid(self, require_percolation: bool = True) -> bool:
        ok = self.symmetric and self.density_ok and self.single_component
        if require_percolation:
            ok = ok and all(self.percolates)
        return ok


def validate(grid: VoxelGrid, sg: SpaceGroup, require_percolation: bool = True) -> ValidityReport:
    """Flags: group-invariance, density floor, single component, percolation."""
    symmetric = all(apply_op(grid, op) == grid for op in sg.ops)
    rho = density(grid)
    report = periodic_components(grid)
    return ValidityReport(
        symmetric=symmetric,
        density_ok=rho >= MIN_DENSITY,
        single_component=report.component_count == 1,
        percolates=report.percolates,
        connectivity=report,
    )


@lru_cache(maxsize=64)
def _orbit_data(n: int, group_number: int):
    part = orbits(n, group(group_number))
    sizes = part.sizes().astype(np.int64)
    members = np.argsort(part.orbit_id, kind="stable")
    starts = np.zeros(part.orbit_count + 1, dtype=np.int64)
    np.cumsum(sizes, out=starts[1:])
    return part, sizes, members, starts


@lru_cache(maxsize=64)
def _skeleton_scores(n: int, group_number: int, with_diagonal: bool = False) -> np.ndarray:
    """Per-orbit proximity to a group-symmetrized rod network.

    Rods along x, y, z through the cell origin (plus, optionally, the body
    diagonal), unioned (elementwise max) over all group operators: an
    exactly orbit-constant field whose superlevel sets are connected and
    wind in all three axes down to low density.  The diagonal rod bridges
    the two interpenetrating axis-rod nets that body-centred groups with
    d-glides otherwise split into, but wastes budget for other groups, so
    both variants are offered.  Used as a connectivity bias of last resort.
    """
    from .voxlat import _op_permutation

    c = (np.arange(n) + 0.5) / n
    d2 = np.minimum(c, 1.0 - c) ** 2  # torus distance to coordinate zero
    prox = np.full((n, n, n), -np.inf)
    np.maximum(prox, -(d2[None, :, None] + d2[None, None, :]), out=prox)  # x rod
    np.maximum(prox, -(d2[:, None, None] + d2[None, None, :]), out=prox)  # y rod
    np.maximum(prox, -(d2[:, None, None] + d2[None, :, None]), out=prox)  # z rod
    if with_diagonal:
        x, y, z = (np.indices((n, n, n)) + 0.5) / n

        def _td(a):
            return np.minimum(np.abs(a), 1.0 - np.abs(a))

        # perpendicular distance to the x=y=z diagonal, wrapped per
        # difference; the 2/3 weight keeps the diagonal rod slightly
        # thinner than the axis rods
        np.maximum(
            prox,
            -(_td(x - y) ** 2 + _td(y - z) ** 2 + _td(z - x) ** 2) * (2.0 / 3.0),
            out=prox,
        )
    flat = prox.ravel()
    out = flat.copy()
    for op in group(group_number).ops:
        perm = _op_permutation(n, op)
        img = np.empty_like(flat)
        img[perm] = flat
        np.maximum(out, img, out=out)
    part, sizes, _, _ = _orbit_data(n, group_number)
    score = np.bincount(part.orbit_id, weights=out, minlength=part.orbit_count) / sizes
    return (score - score.mean()) / max(score.std(), 1e-30)


# Attempts past this point blend the skeleton bias into the random field
# with an increasing weight; the last rungs are skeleton-dominated and all
# but guarantee a connected percolating survivor.
_SKELETON_FROM_ATTEMPT = 12
# None = pure skeleton, noise demoted to a tie-breaker within rod shells
_SKELETON_WEIGHTS = (0.3, 1.0, 3.0, None)


def _orbit_scores(spec: GenSpec, part, sizes, attempt: int) -> np.ndarray:
    """Per-orbit erosion score; higher scores survive longer."""
    n = spec.n
    # consecutive attempt pairs share one noise draw and try both morphologies
    rng = np.random.Generator(np.random.Philox(key=np.uint64([spec.seed, attempt // 2])))
    noise = rng.standard_normal(n**3)
    per_orbit = np.bincount(part.orbit_id, weights=noise, minlength=part.orbit_count) / sizes
    f = per_orbit[part.orbit_id].reshape((n, n, n))
    sigma = n * _SIGMA_LADDER[(attempt // 2) % len(_SIGMA_LADDER)]
    sigma *= max(1.0, (0.08 / spec.target_density) ** 0.5)
    f = gaussian_filter(f, sigma=sigma, mode="wrap")
    # re-average: smoothing is symmetric analytically but not bit-exactly
    score = np.bincount(part.orbit_id, weights=f.ravel(), minlength=part.orbit_count) / sizes
    if attempt >= _SKELETON_FROM_ATTEMPT:
        rung = attempt - _SKELETON_FROM_ATTEMPT
        lam = _SKELETON_WEIGHTS[rung % len(_SKELETON_WEIGHTS)]
        z = (score - score.mean()) / max(score.std(), 1e-30)
        diag = (rung // len(_SKELETON_WEIGHTS)) % 2 == 1
        skel = _skeleton_scores(n, spec.group_number, with_diagonal=diag)
        if lam is None:
            return skel + 1e-9 * z  # noise cannot breach a rod shell
        return z + lam * skel
    if attempt % 2:
        return score  # blob: survivors are the field's superlevel set
    return -np.abs(score - np.median(f))  # shell around the median level


def _torus_bfs_distance(seed: np.ndarray) -> np.ndarray:
    """Periodic 6-neighbor hop distance from the seed set."""
    dist = np.full(seed.shape, np.iinfo(np.int32).max, dtype=np.int32)
    dist[seed] = 0
    frontier = seed.copy()
    d = 0
    while frontier.any():
        d += 1
        grown = np.zeros_like(frontier)
        for axis in range(3):
            for shift in (1, -1):
                grown |= np.roll(frontier, shift, axis=axis)
        frontier = grown & (dist > d)
        dist[frontier] = d
    return dist


def _bridge_tied_winders(spec: GenSpec, occ, cmap, winders, part, members, starts):
    """Reconnect symmetry-tied percolating components with whole orbits.

    Some groups split a sparse symmetric survivor into interpenetrating
    percolating nets that are exact symmetry copies, so no one of them can
    be kept without breaking invariance.  Re-adding removed orbits along
    torus geodesics between the two largest nets merges them with minimal
    extra material; whole-orbit additions keep the grid group-invariant.
    Returns the merged grid, or None when bridging is not worthwhile.
    """
    n = spec.n
    budget = 2.0 * spec.target_density * n**3  # cap the density overshoot
    occ = occ.copy()
    for _ in range(len(winders) - 1):
        pair = winders[np.argsort(cmap.sizes[winders], kind="stable")[-2:]]
        dist_a = _torus_bfs_distance(cmap.labels == pair[0] + 1)
        dist_b = _torus_bfs_distance(cmap.labels == pair[1] + 1)
        geodesic = (dist_a.astype(np.int64) + dist_b.astype(np.int64)).ravel()
        orbit_geo = np.full(part.orbit_count, np.iinfo(np.int64).max)
        np.minimum.at(orbit_geo, part.orbit_id, geodesic)
        removed = np.unique(part.orbit_id[~occ])
        for label in removed[np.argsort(orbit_geo[removed], kind="stable")]:
            occ[members[starts[label] : starts[label + 1]]] = True
            if occ.sum() > budget:
                return None
            cmap = periodic_component_map(VoxelGrid(n, occ.reshape((n,) * 3)))
            winders = np.nonzero(cmap.winding.all(axis=1))[0]
            big = winders[cmap.sizes[winders] == cmap.sizes[winders].max()]
            if len(big) == 1:
                return VoxelGrid(n, cmap.labels == big[0] + 1)
            if len(winders) < 2:
                break
    return None


def _erode(spec: GenSpec, attempt: int):
    """One erosion attempt: remove low-score orbits, then trim satellites."""
    part, sizes, members, starts = _orbit_data(spec.n, spec.group_number)
    order = np.argsort(_orbit_scores(spec, part, sizes, attempt), kind="stable")

    occ = np.ones(spec.n**3, dtype=bool)
    solid = spec.n**3
    target_count = spec.target_density * spec.n**3
    removals = 0
    for label in order:
        if solid <= target_count:
            break
        occ[members[starts[label] : starts[label + 1]]] = False
        solid -= int(sizes[label])
        removals += 1
    grid = VoxelGrid(spec.n, occ.reshape((spec.n,) * 3))

    if removals == 0:
        return grid, removals, False

    cmap = periodic_component_map(grid)
    if cmap.count <= 1:
        return grid, removals, False
    if spec.require_percolation:
        keep = np.nonzero(cmap.winding.all(axis=1))[0]
        if len(keep) > 1:
            # symmetry-related winders tie exactly in size; a unique largest
            # winder is group-invariant and safe to keep
            tied = keep[cmap.sizes[keep] == cmap.sizes[keep].max()]
            if len(tied) > 1:
                bridged = _bridge_tied_winders(
                    spec, occ, cmap, keep, part, members, starts
                )
                return bridged, removals, bridged is not None
            keep = tied
    else:
        keep = np.nonzero(cmap.sizes == cmap.sizes.max())[0]
    if len(keep) != 1:
        return None, removals, False  # ambiguous or nothing to keep: fail
    trimmed = VoxelGrid(spec.n, cmap.labels == keep[0] + 1)
    return trimmed, removals, False


def generate(spec: GenSpec) -> GenResult:
    """Generate one valid symmetric unit cell at the target density.

    Deterministic per spec.  Retries with a derived sub-key when the eroded
    grid fails validation, up to spec.max_attempts.
    """
    sg = group(spec.group_number)
    last_report = None
    for attempt in range(spec.max_attempts):
        grid, removals, bridged = _erode(spec, attempt)
        if grid is None:
            continue
        report = validate(grid, sg, spec.require_percolation)
        # symmetry holds by construction; revalidating it is cheap insurance
        if report.valid(spec.require_percolation) or (
            spec.allow_low_density
            and report.symmetric
            and report.single_component
            and (all(report.percolates) or not spec.require_percolation)
        ):
            return GenResult(
                grid, density(grid), attempt + 1, removals, spec.seed, bridged
            )
        last_report = report
    raise GenerationError(
        f"group {spec.group_number}, n={spec.n}, rho={spec.target_density}, "
        f"seed={spec.seed}: no valid structure in {spec.max_attempts} attempts",
        last_report=last_report,
    )
