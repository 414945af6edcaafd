"""Dataset container, exports, and the resumable batch pipeline.

File layout (all little-endian):
  magic "CMA1" | version u16 | record count u64 | metadata length u32 |
  metadata JSON (utf-8) | records...

Record layout:
  group_number u16 | n u16 | seed u64 | achieved_density f32 | flags u32 |
  voxels ceil(n^3/8) bytes | [properties: len(PROPERTY_FIELDS) f64]

Voxels are bit-packed x-fastest (flat index x + n*y + n^2*z), little-endian
bit order within each byte.  The properties block is present iff the
has-properties flag bit is set; field order is PROPERTY_FIELDS.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .elastica import CubicElastic, Thresholds, summarize
from .genesis import GenSpec, generate
from .homog import Material, homogenize
from .voxlat import VoxelGrid

MAGIC = b"CMA1"
VERSION = 1

FLAG_SYMMETRIC = 1 << 0
FLAG_PERC_X = 1 << 1
FLAG_PERC_Y = 1 << 2
FLAG_PERC_Z = 1 << 3
FLAG_HAS_PROPERTIES = 1 << 4

#: fixed field order of the optional f64 properties block
PROPERTY_FIELDS = (
    "U_a", "U_s", "U_d", "C11", "C12", "C44",
    "rho", "E100", "E111", "Emax", "Emin", "Emean", "dE", "Omega",
    "K", "G_c44", "G_prime", "G_hill", "nu100", "Z",
    "eig1", "eig2", "eig3", "eig4", "eig5", "eig6",
    "E_norm", "G_norm", "K_norm", "K_HSU", "G_HSU", "E_HSU",
    "flag_degenerate", "flag_isotropic", "flag_auxetic", "flag_optimal",
    "flag_highly_anisotropic", "flag_pentamode",
)

_HEADER = struct.Struct("<4sHQI")
_REC_HEAD = struct.Struct("<HHQfI")


class DatasetFormatError(IOError):
    pass


@dataclass
class DatasetRecord:
    group_number: int
    n: int
    seed: int
    achieved_density: float
    flags: int
    grid: VoxelGrid = field(repr=False, default=None)
    properties: dict = None  # keys from PROPERTY_FIELDS when present

    def __post_init__(self):
        if not (195 <= self.group_number <= 230):
            raise ValueError(f"group_number must be in [195,230], got {self.group_number}")
        self.achieved_density = float(np.float32(self.achieved_density))
        if self.properties is not None:
            missing = [k for k in PROPERTY_FIELDS if k not in self.properties]
            if missing:
                raise ValueError(f"properties missing fields: {missing}")
            self.flags |= FLAG_HAS_PROPERTIES

    def __eq__(self, other):
        return (
            isinstance(other, DatasetRecord)
            and self.group_number == other.group_number
            and self.n == other.n
            and self.seed == other.seed
            and np.float32(self.achieved_density) == np.float32(other.achieved_density)
            and self.flags == other.flags
            and self.grid == other.grid
            and self.properties == other.properties
        )


def pack_voxels(grid: VoxelGrid) -> bytes:
    flat = np.ascontiguousarray(grid.occupancy.transpose(2, 1, 0)).ravel()  # x-fastest
    return np.packbits(flat, bitorder="little").tobytes()


def unpack_voxels(data: bytes, n: int) -> VoxelGrid:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")[: n**3]
    occ = bits.astype(bool).reshape((n, n, n)).transpose(2, 1, 0)
    return VoxelGrid(n, occ)


def _write_record(buf, rec: DatasetRecord) -> None:
    buf.write(
        _REC_HEAD.pack(rec.group_number, rec.n, rec.seed, rec.achieved_density, rec.flags)
    )
    buf.write(pack_voxels(rec.grid))
    if rec.flags & FLAG_HAS_PROPERTIES:
        vals = np.array([rec.properties[k] for k in PROPERTY_FIELDS], dtype="<f8")
        buf.write(vals.tobytes())


def _read_exact(fh, count: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise DatasetFormatError(
            f"truncated dataset: wanted {count} bytes, got {len(data)}"
        )
    return data


def _read_record(fh) -> DatasetRecord:
    group, n, seed, density, flags = _REC_HEAD.unpack(_read_exact(fh, _REC_HEAD.size))
    nbytes = (n**3 + 7) // 8
    grid = unpack_voxels(_read_exact(fh, nbytes), n)
    props = None
    if flags & FLAG_HAS_PROPERTIES:
        vals = np.frombuffer(
            _read_exact(fh, 8 * len(PROPERTY_FIELDS)), dtype="<f8"
        )
        props = dict(zip(PROPERTY_FIELDS, vals.tolist()))
    return DatasetRecord(
        group_number=group,
        n=n,
        seed=seed,
        achieved_density=density,
        flags=flags,
        grid=grid,
        properties=props,
    )


def write(path, records, metadata: dict = None) -> None:
    """Write a dataset file; byte-deterministic for identical inputs."""
    meta = json.dumps(metadata or {}, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, VERSION, len(records), len(meta)))
    buf.write(meta)
    for rec in records:
        _write_record(buf, rec)
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def read(path) -> tuple:
    """-> (records, metadata). Strict: bad magic/version/truncation raise."""
    with open(path, "rb") as fh:
        head = _read_exact(fh, _HEADER.size)
        magic, version, count, meta_len = _HEADER.unpack(head)
        if magic != MAGIC:
            raise DatasetFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise DatasetFormatError(f"unsupported format version {version}")
        metadata = json.loads(_read_exact(fh, meta_len).decode())
        records = [_read_record(fh) for _ in range(count)]
        if fh.read(1):
            raise DatasetFormatError("trailing bytes after the last record")
    return records, metadata


def export_tensor(record: DatasetRecord, convention: str = "n_plus_1") -> tuple:
    """-> (raw unsigned-byte tensor, JSON-ready sidecar dict).

    n_plus_1 duplicates plane 0 at index n along each axis (periodic
    closure); flat order matches the tensor's C order with axes (x, y, z).
    """
    if convention not in ("n", "n_plus_1"):
        raise ValueError(f"unknown convention {convention!r}")
    occ = record.grid.occupancy.astype(np.uint8)
    if convention == "n_plus_1":
        occ = np.concatenate([occ, occ[:1]], axis=0)
        occ = np.concatenate([occ, occ[:, :1]], axis=1)
        occ = np.concatenate([occ, occ[:, :, :1]], axis=2)
    sidecar = {
        "shape": list(occ.shape),
        "dtype": "uint8",
        "order": "C",
        "axes": "xyz",
        "convention": convention,
        "group_number": record.group_number,
        "n": record.n,
        "seed": record.seed,
        "achieved_density": record.achieved_density,
    }
    if record.properties is not None:
        sidecar["properties"] = {k: record.properties[k] for k in PROPERTY_FIELDS}
    return occ.tobytes(), sidecar


def export_csv(records, out) -> int:
    """Write one property row per record; returns the number skipped."""
    cols = ("group_number", "n", "seed") + PROPERTY_FIELDS
    out.write(",".join(cols) + "\n")
    skipped = 0
    for rec in records:
        if rec.properties is None:
            skipped += 1
            continue
        vals = [str(rec.group_number), str(rec.n), str(rec.seed)]
        vals += [repr(rec.properties[k]) for k in PROPERTY_FIELDS]
        out.write(",".join(vals) + "\n")
    return skipped


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    groups: tuple  # group numbers
    n: int = 32
    count: int = 1  # structures per group
    seed: int = 0
    rho_min: float = 0.1
    rho_max: float = 0.5
    rho_list: tuple = None  # explicit densities override the uniform window
    material: Material = Material()
    thresholds: Thresholds = Thresholds()
    tol: float = 1e-6
    max_attempts: int = 20

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        raw = dict(raw)
        groups = raw.pop("groups", "all")
        if groups == "all":
            groups = tuple(range(195, 231))
        else:
            groups = tuple(int(g) for g in groups)
        for g in groups:
            if not (195 <= g <= 230):
                raise ConfigError(f"group {g} out of the cubic range [195,230]")
        mat = Material(**raw.pop("material", {}))
        thr = Thresholds(**raw.pop("thresholds", {}))
        rho_list = raw.pop("rho_list", None)
        if rho_list is not None:
            rho_list = tuple(float(r) for r in rho_list)
        known = {"n", "count", "seed", "rho_min", "rho_max", "tol", "max_attempts"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(
                groups=groups, material=mat, thresholds=thr, rho_list=rho_list, **raw
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if cfg.n < 4 or cfg.n % 4 or cfg.count < 1:
            raise ConfigError(f"invalid n={cfg.n} or count={cfg.count}")
        if not (0 < cfg.rho_min <= cfg.rho_max <= 1):
            raise ConfigError(f"invalid density window [{cfg.rho_min}, {cfg.rho_max}]")
        return cfg

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def jobs(self) -> list:
        """Deterministic (group, target_density, seed) work list."""
        out = []
        for g in self.groups:
            for i in range(self.count):
                if self.rho_list is not None:
                    rho = self.rho_list[i % len(self.rho_list)]
                else:
                    rng = np.random.Generator(
                        np.random.Philox(key=np.uint64([self.seed, (g << 20) + i]))
                    )
                    rho = float(self.rho_min + (self.rho_max - self.rho_min) * rng.random())
                out.append((g, round(rho, 6), self.seed + i))
        return out

    def metadata(self) -> dict:
        return {
            "n": self.n,
            "generator": "whole-orbit erosion with satellite trimming",
            "origin_choice": 2,
            "voxel_convention": "centers at (i+0.5)/n, x-fastest bit packing",
            "material": {
                "E_s": self.material.E_s,
                "nu_s": self.material.nu_s,
                "void_contrast": self.material.void_contrast,
            },
            "tol": self.tol,
        }


def run_job(cfg: PipelineConfig, job: tuple) -> DatasetRecord:
    """One full gen -> homog -> props record; pure given (cfg, job)."""
    group_number, rho, seed = job
    gen = generate(
        GenSpec(
            group_number=group_number,
            n=cfg.n,
            target_density=rho,
            seed=seed,
            max_attempts=cfg.max_attempts,
        )
    )
    hres = homogenize(gen.grid, cfg.material, tol=cfg.tol)
    rec_props = summarize(
        CubicElastic(hres.C11, hres.C12, hres.C44),
        rho=gen.achieved_density,
        material=cfg.material,
        thresholds=cfg.thresholds,
    )
    props = {
        "U_a": hres.U_a, "U_s": hres.U_s, "U_d": hres.U_d,
        "C11": hres.C11, "C12": hres.C12, "C44": hres.C44,
        "rho": rec_props.rho,
        "E100": rec_props.E100, "E111": rec_props.E111,
        "Emax": rec_props.Emax, "Emin": rec_props.Emin, "Emean": rec_props.Emean,
        "dE": rec_props.dE, "Omega": rec_props.Omega,
        "K": rec_props.K, "G_c44": rec_props.G_c44, "G_prime": rec_props.G_prime,
        "G_hill": rec_props.G_hill, "nu100": rec_props.nu100, "Z": rec_props.Z,
        **{f"eig{i + 1}": rec_props.eigs[i] for i in range(6)},
        "E_norm": rec_props.E_norm, "G_norm": rec_props.G_norm,
        "K_norm": rec_props.K_norm,
        "K_HSU": rec_props.K_HSU, "G_HSU": rec_props.G_HSU, "E_HSU": rec_props.E_HSU,
        **{
            f"flag_{k}": float(v)
            for k, v in rec_props.flags.items()
        },
    }
    flags = FLAG_SYMMETRIC | FLAG_PERC_X | FLAG_PERC_Y | FLAG_PERC_Z
    return DatasetRecord(
        group_number=group_number,
        n=cfg.n,
        seed=seed,
        achieved_density=gen.achieved_density,
        flags=flags,
        grid=gen.grid,
        properties=props,
    )


def _job_key(job) -> tuple:
    g, rho, seed = job
    return (g, seed, float(np.float32(rho)))


def _worker(args):  # module-level for pickling
    cfg, job = args
    import numba

    workers = _worker_count()
    if workers > 1:
        numba.set_num_threads(1)
    try:
        return job, run_job(cfg, job), None
    except Exception as exc:  # per-record isolation: failures never abort the batch
        return job, None, f"{type(exc).__name__}: {exc}"


def _worker_count() -> int:
    env = os.environ.get("CUBATLAS_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class PipelineReport:
    total: int
    computed: int
    resumed: int
    failed: int
    errors: list


def pipeline(cfg: PipelineConfig, out_path, resume: bool = True, log=None) -> PipelineReport:
    """Run gen -> homog -> props -> classify for every configured job.

    Resumable: records already present in out_path (matched by
    (group, seed, target density) key) are kept, not recomputed.  Per-job
    failures are logged and counted, never abort the batch.  The output
    file is rewritten atomically and is byte-identical across re-runs of
    the same config.
    """
    jobs = cfg.jobs()
    done = {}
    if resume and os.path.exists(out_path):
        old_records, old_meta = read(out_path)
        old_keys = old_meta.get("job_keys", [])
        for rec, key in zip(old_records, old_keys):
            done[tuple(key[:2]) + (float(np.float32(key[2])),)] = rec

    pending = [j for j in jobs if _job_key(j) not in done]
    errors = []
    results = {}
    workers = min(_worker_count(), max(len(pending), 1))
    if pending:
        if workers > 1:
            import multiprocessing
            from concurrent.futures import ProcessPoolExecutor

            # spawn: forking after the OpenMP runtime has started is unsafe
            ctx = multiprocessing.get_context("spawn")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                for job, rec, err in pool.map(
                    _worker, [(cfg, j) for j in pending], chunksize=1
                ):
                    if err is None:
                        results[_job_key(job)] = rec
                    else:
                        errors.append((job, err))
                    if log:
                        log(job, err)
        else:
            for args in [(cfg, j) for j in pending]:
                job, rec, err = _worker(args)
                if err is None:
                    results[_job_key(job)] = rec
                else:
                    errors.append((job, err))
                if log:
                    log(job, err)

    final = []
    job_keys = []
    for job in jobs:
        key = _job_key(job)
        rec = done.get(key) or results.get(key)
        if rec is not None:
            final.append(rec)
            job_keys.append([key[0], key[1], key[2]])
    meta = cfg.metadata()
    meta["job_keys"] = job_keys
    write(out_path, final, metadata=meta)
    return PipelineReport(
        total=len(jobs),
        computed=len(results),
        resumed=len(jobs) - len(pending),
        failed=len(errors),
        errors=errors,
    )
