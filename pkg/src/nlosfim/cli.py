"""Command-line front end: ``nlosfim {decompose,bounds,sweep,compare} ...``.

Exit codes: 0 success, 2 parse/schema/config error, 3 geometry error,
4 numerical degeneracy.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import analyze, relative_reduction, sweep, sweep_csv, sweep_summary_json
from .decomposition import projected_gains
from .errors import DegenerateError, GeometryError, ScenarioFileError
from .scenario_io import load_scenario_file

EXIT_OK, EXIT_PARSE, EXIT_GEOMETRY, EXIT_DEGENERATE = 0, 2, 3, 4


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, np.integer):
        return int(x)
    return x


def dumps(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_atomic(path, data):
    """Write ``data`` (str or bytes) to ``path`` via a temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, inputs, seed, outputs, started, command):
    hashes = [file_sha256(p) for p in inputs]
    combined = hashes[0] if len(hashes) == 1 else hashlib.sha256("".join(hashes).encode()).hexdigest()
    manifest = {
        "command": command,
        "input_hash": combined,
        "inputs": [{"path": str(p), "sha256": h} for p, h in zip(inputs, hashes)],
        "seed": seed,
        "tool_version": __version__,
        "wall_time_s": time.perf_counter() - started,
        "outputs": sorted(str(o) for o in outputs),
    }
    return write_atomic(Path(out_dir) / "manifest.json", dumps(manifest))


def _mode(args):
    return "fast" if args.fast else "full"


def _seed(args, sf):
    return sf.seed if args.seed is None else args.seed


def _analysis_dict(res, seed, mode):
    dec, rep = res.decomposition, res.report
    return {
        "seed": seed,
        "mode": mode,
        "efim": dec.efim,
        "peb": rep.peb,
        "oeb": rep.oeb,
        "efim_rank": rep.efim_rank,
        "condition_number": rep.condition_number,
        "los_terms": [rep_term for rep_term in rep.to_dict()["terms"][: len(dec.los_terms)]],
        "nlos_terms": [rep_term for rep_term in rep.to_dict()["terms"][len(dec.los_terms) :]],
    }


def _print_decomposition(d, out):
    out.write(f"{'source':<10} {'lambda':>13} {'v_x':>9} {'v_y':>9} {'v_alpha':>9} {'lambda_xy':>13} {'lambda_alpha':>13}\n")
    for t in d["los_terms"] + d["nlos_terms"]:
        vx, vy, va = (round(x, 5) + 0.0 for x in t["v"])  # no "-0.00000"
        out.write(
            f"{t['source']:<10} {t['lam']:13.6g} {vx:9.5f} {vy:9.5f} {va:9.5f} "
            f"{t['lambda_xy']:13.6g} {t['lambda_alpha']:13.6g}\n"
        )
    out.write("efim:\n")
    for row in np.asarray(d["efim"]):
        out.write("  " + " ".join(f"{x:14.6g}" for x in row) + "\n")
    out.write(f"peb  {d['peb']:.6g} m\noeb  {d['oeb']:.6g} rad\nrank {d['efim_rank']}\n")


def cmd_decompose(args):
    started = time.perf_counter()
    sf = load_scenario_file(args.file)
    seed = _seed(args, sf)
    res = analyze(sf.setup(seed=seed), _mode(args))
    d = _analysis_dict(res, seed, _mode(args))
    if args.json:
        sys.stdout.write(dumps(d))
    else:
        _print_decomposition(d, sys.stdout)
    if args.out:
        path = write_atomic(Path(args.out) / "decomposition.json", dumps(d))
        write_manifest(args.out, [args.file], seed, [path.name], started, "decompose")
    return EXIT_OK


def cmd_bounds(args):
    started = time.perf_counter()
    sf = load_scenario_file(args.file)
    seed = _seed(args, sf)
    rep = analyze(sf.setup(seed=seed), _mode(args)).report
    d = {
        "peb": rep.peb,
        "oeb": rep.oeb,
        "efim_rank": rep.efim_rank,
        "condition_number": rep.condition_number,
        "seed": seed,
    }
    sys.stdout.write(dumps(d))
    if args.out:
        path = write_atomic(Path(args.out) / "bounds.json", dumps(d))
        write_manifest(args.out, [args.file], seed, [path.name], started, "bounds")
    return EXIT_OK


def heatmap_svg(grid, values, title, colorbar_label, p=None, q=None):
    """Self-contained SVG raster of ``values`` over ``grid`` (invalid cells grey)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs, ys = grid.xs, grid.ys
    dx = xs[1] - xs[0]
    dy = ys[1] - ys[0]
    edges_x = np.concatenate([xs - dx / 2, [xs[-1] + dx / 2]])
    edges_y = np.concatenate([ys - dy / 2, [ys[-1] + dy / 2]])
    masked = np.ma.masked_invalid(np.where(grid.valid, values, np.nan))
    cmap = matplotlib.colormaps["viridis"].copy()
    cmap.set_bad("0.8")
    with plt.rc_context({"svg.hashsalt": "nlosfim", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5.5, 4.5))
        mesh = ax.pcolormesh(edges_x, edges_y, masked, cmap=cmap, shading="flat")
        fig.colorbar(mesh, ax=ax, label=colorbar_label)
        for pt, name, marker in ((q, "q", "^"), (p, "p", "s")):
            if pt is not None and edges_x[0] <= pt[0] <= edges_x[-1] and edges_y[0] <= pt[1] <= edges_y[-1]:
                ax.plot(pt[0], pt[1], marker, color="white", markeredgecolor="black", label=name)
        ax.set_xlabel("s_x [m]")
        ax.set_ylabel("s_y [m]")
        ax.set_title(title)
        ax.set_aspect("equal")
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
        plt.close(fig)
    return buf.getvalue()


def cmd_sweep(args):
    started = time.perf_counter()
    sf = load_scenario_file(args.file)
    seed = _seed(args, sf)
    setup = sf.setup(n_tx=args.ntx, seed=seed)
    grid = sweep(setup, sf.grid(args.grid), _mode(args))
    out = Path(args.out)
    sc = setup.scenario
    with np.errstate(divide="ignore"):
        log_xy = np.log10(grid.lambda_xy)
    written = [
        write_atomic(out / "sweep.csv", sweep_csv(grid)),
        write_atomic(out / "sweep_summary.json", sweep_summary_json(grid)),
        write_atomic(
            out / "lambda_xy.svg",
            heatmap_svg(grid, log_xy, f"net position gain, N_TX={sc.anchor.n_tx}", "log10 lambda_xy",
                        sc.mobile.p, sc.anchor.q),
        ),
        write_atomic(
            out / "delta_peb.svg",
            heatmap_svg(grid, grid.delta_peb, f"PEB reduction, N_TX={sc.anchor.n_tx}", "delta PEB [%]",
                        sc.mobile.p, sc.anchor.q),
        ),
    ]
    write_manifest(out, [args.file], seed, [w.name for w in written], started, "sweep")
    sys.stdout.write(sweep_summary_json(grid))
    return EXIT_OK


def cmd_compare(args):
    started = time.perf_counter()
    a, b = load_scenario_file(args.file_a), load_scenario_file(args.file_b)
    if a.config != b.config or a.gamma_r != b.gamma_r:
        raise ScenarioFileError(f"{args.file_b}: signal configuration differs from {args.file_a}")
    seed_a, seed_b = _seed(args, a), _seed(args, b)
    ra = analyze(a.setup(seed=seed_a), _mode(args))
    rb = analyze(b.setup(seed=seed_b), _mode(args))

    def terms(res):
        return {t.label: t for t in res.decomposition.terms}

    ta, tb = terms(ra), terms(rb)
    diff = []
    for label in sorted(set(ta) | set(tb)):
        la = ta[label].lam if label in ta else 0.0
        lb = tb[label].lam if label in tb else 0.0
        xy_a = projected_gains(ta[label])[0] if label in ta else 0.0
        xy_b = projected_gains(tb[label])[0] if label in tb else 0.0
        diff.append({"source": label, "lam_a": la, "lam_b": lb, "lambda_xy_a": xy_a, "lambda_xy_b": xy_b})
    pa, pb = ra.report.peb, rb.report.peb
    oa, ob = ra.report.oeb, rb.report.oeb
    d = {
        "peb_a": pa,
        "peb_b": pb,
        "oeb_a": oa,
        "oeb_b": ob,
        "rank_a": ra.report.efim_rank,
        "rank_b": rb.report.efim_rank,
        "delta_peb": relative_reduction(pa, pb),
        "delta_oeb": relative_reduction(oa, ob),
        "peb_ratio": pb / pa if math.isfinite(pa) and pa > 0 else math.inf,
        "terms": diff,
    }
    sys.stdout.write(dumps(d))
    if args.out:
        path = write_atomic(Path(args.out) / "compare.json", dumps(d))
        write_manifest(args.out, [args.file_a, args.file_b], seed_a, [path.name], started, "compare")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="nlosfim", description="Position/orientation Fisher information with NLOS paths.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the seed given in the file")
    common.add_argument("--fast", action="store_true", help="skip inter-path FIM entries (same per-path result)")

    p = sub.add_parser("decompose", parents=[common], help="rank-one EFIM terms, PEB and OEB")
    p.add_argument("file")
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")
    p.add_argument("--out", help="also write decomposition.json and manifest.json here")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("bounds", parents=[common], help="PEB, OEB and EFIM rank as JSON")
    p.add_argument("file")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("sweep", parents=[common], help="move one extra scatterer over a grid")
    p.add_argument("file")
    p.add_argument("--ntx", type=int, default=None, help="override the anchor ULA size")
    p.add_argument("--grid", type=int, default=None, help="cells per axis (default from file)")
    p.add_argument("--out", default="sweep_out", help="output directory (default: sweep_out)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", parents=[common], help="PEB/OEB of two scenario files")
    p.add_argument("file_a")
    p.add_argument("file_b")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "ntx", None) is not None and args.ntx < 1:
        print("error: --ntx must be >= 1", file=sys.stderr)
        return EXIT_PARSE
    if getattr(args, "grid", None) is not None and args.grid < 2:
        print("error: --grid must be >= 2", file=sys.stderr)
        return EXIT_PARSE
    try:
        return args.func(args)
    except ScenarioFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except GeometryError as exc:
        node = f" (node {exc.node})" if exc.node else ""
        print(f"geometry error{node}: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except DegenerateError as exc:
        print(f"numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
