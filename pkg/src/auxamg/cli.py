"""Batch driver: build a problem, set up the hierarchy, solve, write reports.

Examples::

    auxamg --gen poisson2d --n 64 --rtol 1e-6
    auxamg --gen poisson2d --n 64,128,256 --report sweep.csv
    auxamg --matrix A.mtx --coords xy.txt --format jsonl --report run.jsonl
    auxamg --mesh disk.mesh --max-iters 50
"""
import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import parallel
from .cycle import CycleOptions, solve
from .errors import AmgError, DefinitenessError, GeometryError, ParseError, StructureError
from .hierarchy import HierarchyOptions, setup_hierarchy
from .problems import assemble_fem_triangle, gen_poisson_uniform2d, read_mesh, structured_square_mesh
from .sparse import read_matrix_market

log = logging.getLogger("auxamg")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3
EXIT_STRUCTURE = 4
EXIT_DEFINITENESS = 5
EXIT_GEOMETRY = 6
EXIT_PARSE = 7
EXIT_IO = 8

GENERATORS = ("poisson2d", "fem2d")
CSV_COLUMNS = ("N", "levels", "opcomplexity", "iters", "setup_s", "solve_s", "total_s", "converged")


@dataclass
class RunConfig:
    gen: str = None
    n: int = None
    matrix: str = None
    coords: str = None
    mesh: str = None
    cycle: CycleOptions = field(default_factory=CycleOptions)
    coarsest_size: int = 64
    strict_locality: bool = False
    threads: int = 1
    report: str = None
    format: str = "csv"
    verbose: int = 0

    def validate(self):
        sources = [self.gen is not None, self.matrix is not None, self.mesh is not None]
        if sum(sources) != 1:
            raise ValueError("give exactly one of --gen, --matrix, --mesh")
        if self.gen is not None:
            if self.gen not in GENERATORS:
                raise ValueError(f"unknown generator '{self.gen}' (choose from {', '.join(GENERATORS)})")
            if self.n is None:
                raise ValueError("--gen needs --n")
        if self.matrix is not None and self.coords is None:
            raise ValueError("--matrix needs --coords (the auxiliary grid requires DoF coordinates)")
        if self.format not in ("csv", "jsonl"):
            raise ValueError("--format must be csv or jsonl")
        if self.coarsest_size < 1 or self.threads < 1:
            raise ValueError("--coarsest-size and --threads must be positive")


@dataclass
class RunReport:
    N: int
    nnz: int
    source: str
    levels: int
    level_sizes: list
    level_nnz: list
    opcomplexity: float
    iters: int
    setup_s: float
    solve_s: float
    total_s: float
    converged: bool
    residual_history: list
    dropped_couplings: int = 0

    def csv_row(self):
        return {
            "N": self.N,
            "levels": self.levels,
            "opcomplexity": f"{self.opcomplexity:.6f}",
            "iters": self.iters,
            "setup_s": f"{self.setup_s:.3f}",
            "solve_s": f"{self.solve_s:.3f}",
            "total_s": f"{self.total_s:.3f}",
            "converged": int(self.converged),
        }


def read_coords(path, n=None):
    rows = []
    with open(path) as fh:
        for no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) != 2:
                raise ParseError("coordinate line must be 'x y'", path, no)
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise ParseError("bad coordinate", path, no) from None
    coords = np.array(rows, dtype=np.float64).reshape(-1, 2)
    if n is not None and len(coords) != n:
        raise ParseError(f"expected {n} coordinates, found {len(coords)}", path, None)
    return coords


def load_problem(config, n=None):
    """Return ``(A, b, coords, label)`` for the configured problem source."""
    if config.gen is not None:
        n = config.n if n is None else n
        if config.gen == "poisson2d":
            sys_ = gen_poisson_uniform2d(n)
        else:
            sys_ = assemble_fem_triangle(structured_square_mesh(n))
        return sys_.A, sys_.b, sys_.coords, f"{config.gen}:{n}"
    if config.mesh is not None:
        sys_ = assemble_fem_triangle(read_mesh(config.mesh))
        return sys_.A, sys_.b, sys_.coords, f"mesh:{config.mesh}"
    A = read_matrix_market(config.matrix)
    coords = read_coords(config.coords, A.n_rows)
    b = np.ones(A.n_rows)
    return A, b, coords, f"matrix:{config.matrix}"


def run(config, n=None):
    """Set up and solve one problem; returns a :class:`RunReport`."""
    config.validate()
    parallel.set_threads(config.threads)
    A, b, coords, label = load_problem(config, n)
    t0 = time.perf_counter()
    h = setup_hierarchy(A, coords, HierarchyOptions(coarsest_size=config.coarsest_size,
                                                    strict_locality=config.strict_locality))
    res = solve(A, b, h, config.cycle)
    total = time.perf_counter() - t0
    stats = h.stats()
    return RunReport(
        N=A.n_rows, nnz=A.nnz, source=label,
        levels=stats["levels"], level_sizes=stats["sizes"], level_nnz=stats["nnz"],
        opcomplexity=stats["operator_complexity"], iters=res.iterations,
        setup_s=round(h.setup_time, 3), solve_s=round(res.timings["solve"], 3),
        total_s=round(total, 3), converged=res.converged,
        residual_history=[float(r) for r in res.residual_history],
        dropped_couplings=stats["dropped_couplings"])


def residuals_path(path):
    p = Path(path)
    return p.with_name(p.stem + ".residuals.csv")


def emit_report(reports, path, format="csv"):
    """Write one or more reports.

    ``csv`` writes the summary columns plus a sibling ``<stem>.residuals.csv``
    holding ``run,iteration,residual``; ``jsonl`` writes one full record per run.
    """
    if isinstance(reports, RunReport):
        reports = [reports]
    path = Path(path)
    if format == "jsonl":
        with open(path, "w") as fh:
            for r in reports:
                fh.write(json.dumps(dataclasses.asdict(r)) + "\n")
        return path
    if format != "csv":
        raise ValueError(f"unknown report format '{format}'")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in reports:
            w.writerow(r.csv_row())
    with open(residuals_path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "iteration", "residual"])
        for run_id, r in enumerate(reports):
            for it, res in enumerate(r.residual_history):
                w.writerow([run_id, it, repr(res)])
    return path


def read_report_csv(path):
    """Parse a summary CSV back into typed dicts (one per run)."""
    casts = {"N": int, "levels": int, "opcomplexity": float, "iters": int, "setup_s": float,
             "solve_s": float, "total_s": float, "converged": lambda s: bool(int(s))}
    with open(path, newline="") as fh:
        return [{k: casts[k](v) for k, v in row.items()} for row in csv.DictReader(fh)]


def read_jsonl(path):
    with open(path) as fh:
        return [RunReport(**json.loads(line)) for line in fh if line.strip()]


def _sweeps(text):
    parts = text.split(",")
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("--sweeps takes 'pre,post' or a single count")
    return int(parts[0]), int(parts[1])


def _sizes(text):
    try:
        return [int(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("--n takes an integer or a comma-separated list") from None


def build_parser():
    p = argparse.ArgumentParser(prog="auxamg", description=__doc__.split("\n\n")[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    src = p.add_argument_group("problem source (exactly one)")
    src.add_argument("--gen", choices=GENERATORS, help="built-in generator")
    src.add_argument("--n", type=_sizes, help="cells per side; a comma list runs a sweep")
    src.add_argument("--matrix", help="Matrix Market file (needs --coords)")
    src.add_argument("--coords", help="text file, one 'x y' line per DoF")
    src.add_argument("--mesh", help="triangle mesh file (NODES/ELEMENTS/BOUNDARY format)")
    sol = p.add_argument_group("solver")
    sol.add_argument("--rtol", type=float, default=1e-6)
    sol.add_argument("--max-iters", type=int, default=100)
    sol.add_argument("--inner", type=int, default=2, help="Krylov steps per coarse correction")
    sol.add_argument("--sweeps", type=_sweeps, default=(1, 1), metavar="PRE,POST")
    sol.add_argument("--coarsest-size", type=int, default=64)
    sol.add_argument("--max-directions", type=int, default=None)
    sol.add_argument("--strict-locality", action="store_true",
                     help="fail setup on couplings beyond the 9-point stencil")
    sol.add_argument("--threads", type=int, default=1)
    out = p.add_argument_group("output")
    out.add_argument("--report", help="report path")
    out.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    out.add_argument("-v", "--verbose", action="count", default=0)
    out.add_argument("-q", "--quiet", action="store_true")
    return p


def config_from_args(args):
    cycle = CycleOptions(n_inner=args.inner, pre_sweeps=args.sweeps[0], post_sweeps=args.sweeps[1],
                         max_outer=args.max_iters, rtol=args.rtol,
                         max_directions=args.max_directions)
    return RunConfig(gen=args.gen, n=None, matrix=args.matrix, coords=args.coords, mesh=args.mesh,
                     cycle=cycle, coarsest_size=args.coarsest_size,
                     strict_locality=args.strict_locality, threads=args.threads,
                     report=args.report, format=args.format, verbose=args.verbose)


def _exit_code(exc):
    if isinstance(exc, StructureError):
        return EXIT_STRUCTURE
    if isinstance(exc, DefinitenessError):
        return EXIT_DEFINITENESS
    if isinstance(exc, GeometryError):
        return EXIT_GEOMETRY
    if isinstance(exc, ParseError):
        return EXIT_PARSE
    return EXIT_ERROR


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=logging.ERROR if args.quiet else level,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
        sizes = args.n if args.n is not None else [None]
        if args.gen is not None:
            config.n = sizes[0]
        config.validate()
        reports = []
        for n in sizes:
            rep = run(config, n)
            reports.append(rep)
            if not args.quiet:
                print(f"{rep.source}: N={rep.N} levels={rep.levels} "
                      f"opcx={rep.opcomplexity:.3f} iters={rep.iters} "
                      f"setup={rep.setup_s:.3f}s solve={rep.solve_s:.3f}s "
                      f"total={rep.total_s:.3f}s converged={rep.converged}")
        if args.report:
            emit_report(reports, args.report, args.format)
    except ValueError as exc:
        if not isinstance(exc, AmgError):
            parser.print_usage(sys.stderr)
            print(f"auxamg: error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        print(f"auxamg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except AmgError as exc:
        print(f"auxamg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"auxamg: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    finally:
        parallel.set_threads(1)
    return EXIT_OK if all(r.converged for r in reports) else EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
