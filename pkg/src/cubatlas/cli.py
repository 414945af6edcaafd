"""Command-line interface.

Subcommands: gen, homog, props, classify, stats, export, pipeline,
symgroup.  Exit codes: 0 success, 1 partial failures, 2 config/usage error.
Thread count comes from the CUBATLAS_THREADS environment variable
(default: all cores).  Report-producing commands write matplotlib figures
next to their delimited output.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import atlas_io, elastica, genesis, homog, stats, symgroup

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


def _parse_rho_schedule(text: str) -> list:
    """'0.1:0.5:0.1' -> [0.1, 0.2, 0.3, 0.4, 0.5]; '0.3' or '0.1,0.3' also work."""
    if ":" in text:
        lo, hi, step = (float(x) for x in text.split(":"))
        count = int(round((hi - lo) / step)) + 1
        return [round(lo + i * step, 10) for i in range(count)]
    return [float(x) for x in text.split(",")]


def _parse_groups(text: str) -> list:
    if text == "all":
        return list(range(195, 231))
    out = []
    for part in text.split(","):
        if "-" in part:
            a, b = (int(x) for x in part.split("-"))
            out.extend(range(a, b + 1))
        else:
            out.append(int(part))
    return out


def _parse_material(text: str) -> homog.Material:
    kw = {}
    names = {"E": "E_s", "nu": "nu_s", "chi": "void_contrast"}
    for part in text.split(","):
        k, v = part.split("=")
        kw[names.get(k.strip(), k.strip())] = float(v)
    return homog.Material(**kw)


def cmd_symgroup(args) -> int:
    g = symgroup.group(args.number)
    print(f"group {g.number}  {g.hm_symbol}")
    print(f"bravais {g.bravais}")
    print(f"point_group {g.point_group}")
    print(f"order {g.order}")
    return EXIT_OK


def cmd_gen(args) -> int:
    groups = _parse_groups(args.group)
    rhos = _parse_rho_schedule(args.rho)
    records = []
    failures = 0
    for g in groups:
        for i in range(args.count):
            rho = rhos[i % len(rhos)]
            seed = args.seed + i
            try:
                res = genesis.generate(
                    genesis.GenSpec(group_number=g, n=args.n, target_density=rho, seed=seed)
                )
            except genesis.GenerationError as exc:
                print(f"FAIL group={g} rho={rho} seed={seed}: {exc}", file=sys.stderr)
                failures += 1
                continue
            flags = (
                atlas_io.FLAG_SYMMETRIC
                | atlas_io.FLAG_PERC_X
                | atlas_io.FLAG_PERC_Y
                | atlas_io.FLAG_PERC_Z
            )
            records.append(
                atlas_io.DatasetRecord(
                    group_number=g,
                    n=args.n,
                    seed=seed,
                    achieved_density=res.achieved_density,
                    flags=flags,
                    grid=res.grid,
                )
            )
    atlas_io.write(args.out, records, metadata={"command": "gen"})
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_homog(args) -> int:
    records, meta = atlas_io.read(getattr(args, "in"))
    material = _parse_material(args.material)
    failures = 0
    for rec in records:
        try:
            h = homog.homogenize(rec.grid, material, tol=args.tol)
            p = elastica.summarize(
                elastica.CubicElastic(h.C11, h.C12, h.C44),
                rho=rec.achieved_density,
                material=material,
            )
            rec.properties = _props_dict(h, p)
            rec.flags |= atlas_io.FLAG_HAS_PROPERTIES
        except (homog.SolverError, ValueError) as exc:
            print(f"FAIL group={rec.group_number} seed={rec.seed}: {exc}", file=sys.stderr)
            failures += 1
    atlas_io.write(args.out, records, metadata=meta)
    print(f"annotated {len(records) - failures}/{len(records)} records")
    return EXIT_PARTIAL if failures else EXIT_OK


def _props_dict(h: homog.HomogResult, p: elastica.PropertyRecord) -> dict:
    d = {
        "U_a": h.U_a, "U_s": h.U_s, "U_d": h.U_d,
        "C11": h.C11, "C12": h.C12, "C44": h.C44,
        "rho": p.rho, "E100": p.E100, "E111": p.E111,
        "Emax": p.Emax, "Emin": p.Emin, "Emean": p.Emean,
        "dE": p.dE, "Omega": p.Omega, "K": p.K,
        "G_c44": p.G_c44, "G_prime": p.G_prime, "G_hill": p.G_hill,
        "nu100": p.nu100, "Z": p.Z,
        "E_norm": p.E_norm, "G_norm": p.G_norm, "K_norm": p.K_norm,
        "K_HSU": p.K_HSU, "G_HSU": p.G_HSU, "E_HSU": p.E_HSU,
    }
    for i in range(6):
        d[f"eig{i + 1}"] = p.eigs[i]
    for k, v in p.flags.items():
        d[f"flag_{k}"] = float(v)
    return d


def cmd_props(args) -> int:
    records, _ = atlas_io.read(getattr(args, "in"))
    with open(args.out, "w") as fh:
        skipped = atlas_io.export_csv(records, fh)
    if skipped:
        print(f"skipped {skipped} records without properties", file=sys.stderr)
    print(f"wrote {len(records) - skipped} rows to {args.out}")
    return EXIT_OK


def cmd_classify(args) -> int:
    records, _ = atlas_io.read(getattr(args, "in"))
    wanted = args.list
    hits = 0
    for rec in records:
        if rec.properties is None:
            continue
        if wanted == "iso-auxetic":
            match = rec.properties["flag_isotropic"] and rec.properties["flag_auxetic"]
        else:
            match = rec.properties.get(f"flag_{wanted}", 0.0)
        if match:
            hits += 1
            print(
                f"group={rec.group_number} seed={rec.seed} "
                f"rho={rec.achieved_density:.4f}"
            )
    print(f"{hits} matching records")
    return EXIT_OK


def cmd_stats(args) -> int:
    with open(getattr(args, "in")) as fh:
        rows = list(csv.DictReader(fh))
    rows = [
        r
        for r in rows
        if args.rho_min <= float(r["rho"]) <= args.rho_max
    ]
    if not rows:
        print("no rows in the density window", file=sys.stderr)
        return EXIT_CONFIG
    by = args.by
    prop = args.prop

    def label_of(row):
        g = int(row["group_number"])
        if by == "space_group":
            return g
        if by == "bravais":
            return symgroup.bravais_of(g)
        return symgroup.point_group_of(g)

    labels = [label_of(r) for r in rows]
    values = [float(r[prop]) for r in rows]
    try:
        res = stats.kruskal_wallis(stats.GroupedSample(tuple(labels), tuple(values)))
    except (ValueError, stats.DegenerateSampleError) as exc:
        print(f"stats error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    header = "property\tby\tH\tdf\tn\tp\teps_sq\tinterpretation"
    line = (
        f"{prop}\t{by}\t{res.H:.1f}\t{res.df}\t{res.n}\t{res.p:.3g}\t"
        f"{res.epsilon_sq:.2f}\t{res.interpretation}"
    )
    print(header)
    print(line)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(header + "\n" + line + "\n")
        _render_stats_figure(labels, values, prop, by, args.out)
        print(f"wrote {args.out} and figure alongside")
    return EXIT_OK


def _render_stats_figure(labels, values, prop, by, out_path) -> None:
    """Box plot of the property grouped by category, next to the table."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    uniq = sorted(set(labels), key=str)
    data = [
        [v for l, v in zip(labels, values) if l == u]  # noqa: E741
        for u in uniq
    ]
    fig, ax = plt.subplots(figsize=(max(6, 0.3 * len(uniq) + 2), 4))
    ax.boxplot(data, tick_labels=[str(u) for u in uniq])
    ax.set_xlabel(by)
    ax.set_ylabel(prop)
    ax.set_title(f"{prop} by {by}")
    if len(uniq) > 10:
        ax.tick_params(axis="x", rotation=90)
    fig.tight_layout()
    fig.savefig(os.path.splitext(out_path)[0] + ".png", dpi=120)
    plt.close(fig)


def _render_pipeline_figures(records, out_base) -> None:
    """Summary figures rendered next to the dataset/CSV output."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with_props = [r for r in records if r.properties is not None]
    if not with_props:
        return
    rho = [r.properties["rho"] for r in with_props]
    e_norm = [r.properties["E_norm"] for r in with_props]
    z = [r.properties["Z"] for r in with_props]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    axes[0].hist(rho, bins=20)
    axes[0].set_xlabel("relative density")
    axes[0].set_ylabel("count")
    axes[1].scatter(rho, e_norm, s=8)
    axes[1].set_xlabel("relative density")
    axes[1].set_ylabel("normalized E(100)")
    axes[2].hist(np.log10(z), bins=20)
    axes[2].set_xlabel("log10 Zener ratio")
    axes[2].set_ylabel("count")
    fig.tight_layout()
    fig.savefig(out_base + "_report.png", dpi=120)
    plt.close(fig)

    counts = {}
    for r in with_props:
        for name in ("isotropic", "auxetic", "optimal", "highly_anisotropic", "pentamode"):
            counts[name] = counts.get(name, 0) + int(r.properties[f"flag_{name}"])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(list(counts), list(counts.values()))
    ax.set_ylabel("structures")
    ax.set_title("classification counts")
    fig.tight_layout()
    fig.savefig(out_base + "_classes.png", dpi=120)
    plt.close(fig)


def cmd_export(args) -> int:
    records, _ = atlas_io.read(getattr(args, "in"))
    os.makedirs(args.out_dir, exist_ok=True)
    for i, rec in enumerate(records):
        raw, sidecar = atlas_io.export_tensor(rec, convention=args.convention)
        base = os.path.join(
            args.out_dir, f"{rec.group_number}_{rec.seed}_{i:06d}"
        )
        with open(base + ".u8", "wb") as fh:
            fh.write(raw)
        with open(base + ".json", "w") as fh:
            json.dump(sidecar, fh, sort_keys=True)
    print(f"exported {len(records)} tensors to {args.out_dir}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    try:
        cfg = atlas_io.PipelineConfig.from_file(args.config)
    except atlas_io.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    def log(job, err):
        if err:
            print(f"FAIL {job}: {err}", file=sys.stderr)
        elif args.verbose:
            print(f"done {job}")

    report = atlas_io.pipeline(cfg, args.out, resume=not args.no_resume, log=log)
    print(
        f"total={report.total} computed={report.computed} "
        f"resumed={report.resumed} failed={report.failed}"
    )
    records, _ = atlas_io.read(args.out)
    base = os.path.splitext(args.out)[0]
    with open(base + ".csv", "w") as fh:
        atlas_io.export_csv(records, fh)
    _render_pipeline_figures(records, base)
    print(f"wrote {args.out}, {base}.csv and report figures")
    return EXIT_PARTIAL if report.failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cubatlas", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sg = sub.add_parser("symgroup", help="space group info")
    sg_sub = sg.add_subparsers(dest="subcommand", required=True)
    info = sg_sub.add_parser("info")
    info.add_argument("number", type=int)
    info.set_defaults(func=cmd_symgroup)

    g = sub.add_parser("gen", help="generate structures")
    g.add_argument("--group", default="all")
    g.add_argument("--n", type=int, default=64)
    g.add_argument("--rho", default="0.05:0.50:0.05")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    h = sub.add_parser("homog", help="annotate records with moduli")
    h.add_argument("--in", required=True)
    h.add_argument("--material", default="E=205000,nu=0.29")
    h.add_argument("--tol", type=float, default=1e-6)
    h.add_argument("--out", required=True)
    h.set_defaults(func=cmd_homog)

    pr = sub.add_parser("props", help="export property table")
    pr.add_argument("--in", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_props)

    cl = sub.add_parser("classify", help="filter by family flag")
    cl.add_argument("--in", required=True)
    cl.add_argument(
        "--list",
        required=True,
        choices=["pentamode", "auxetic", "optimal", "isotropic",
                 "highly_anisotropic", "iso-auxetic"],
    )
    cl.set_defaults(func=cmd_classify)

    stp = sub.add_parser("stats", help="rank test over a property table")
    stp.add_argument("--in", required=True)
    stp.add_argument("--by", default="space_group",
                     choices=["space_group", "bravais", "point_group"])
    stp.add_argument("--prop", default="E_norm")
    stp.add_argument("--rho-min", type=float, default=0.05)
    stp.add_argument("--rho-max", type=float, default=0.2)
    stp.add_argument("--out", default=None)
    stp.set_defaults(func=cmd_stats)

    ex = sub.add_parser("export", help="raw tensors + JSON sidecars")
    ex.add_argument("--in", required=True)
    ex.add_argument("--out-dir", required=True)
    ex.add_argument("--convention", default="n_plus_1", choices=["n", "n_plus_1"])
    ex.set_defaults(func=cmd_export)

    pl = sub.add_parser("pipeline", help="end-to-end batch run")
    pl.add_argument("--config", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--no-resume", action="store_true")
    pl.add_argument("--verbose", action="store_true")
    pl.set_defaults(func=cmd_pipeline)

    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (atlas_io.DatasetFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
