"""Command-line surface: dataset generation, solvers, verification, bench.

Exit codes: 0 success, 2 usage error, 3 verification failure, 4 accounting
or budget error. Every command is reproducible: identical flags and seed
produce identical output bytes.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .constants import PRACTICAL_GAMMA, THEORY_GAMMA, make_constants
from .core import FLInstance, KMeansInstance, PointSet, normalize
from .errors import AccountingError, BuildError, InputError
from .facility import SolveConfig, certified_solution, solve_fl
from .kmeans import solve_kmeans
from .oracles import bruteforce_kmeans_opt
from .pointio import dump_report, read_points_csv, write_points_csv
from .verify import SUITES, spanner_coverage_stats

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VERIFY = 3
EXIT_ACCOUNTING = 4


def _read_config_file(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, val = line.split("=", 1)
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def _solve_config(args) -> SolveConfig:
    gamma = args.gamma
    if gamma is None:
        gamma = THEORY_GAMMA if args.constants == "theory" else PRACTICAL_GAMMA
    return SolveConfig(mode=args.mode, gamma=float(gamma), sigma=args.sigma,
                       epsilon=args.epsilon, seed=args.seed)


def _add_common(p):
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=None,
                   help="constant-table parameter; overrides --constants")
    p.add_argument("--mode", choices=["exact", "lsh"], default="exact")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--constants", choices=["theory", "practical"],
                   default="theory")
    p.add_argument("--report", default=None, help="write JSON report here")
    p.add_argument("--config", default=None,
                   help="key=value file; explicit flags win")


def cmd_gen(args) -> int:
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    if args.kind == "gauss":
        if args.stddev <= 0:
            raise InputError("stddev must be > 0 (zero would duplicate points)")
        centers = rng.uniform(-args.spread, args.spread,
                              size=(args.clusters, args.dim))
        rows = [c[None, :] + rng.normal(0, args.stddev,
                                        size=(args.per_cluster, args.dim))
                for c in centers]
        coords = np.vstack(rows)
        truth = centers
    elif args.kind == "planted":
        # separations beyond the dependency merge radius, so the k-means
        # reduction can resolve multiple facilities at desk scale
        from .verify import planted_points
        ps, truth = planted_points(args.seed,
                                   args.clusters * args.per_cluster,
                                   args.clusters, d=args.dim,
                                   base_sep=args.spread * 1.0e4,
                                   equal_sep=args.equal_sep)
        coords = ps.coords
    else:
        coords = rng.uniform(-args.spread, args.spread,
                             size=(args.count, args.dim))
        truth = None
    coords = np.unique(np.round(coords, 9), axis=0)
    ps = PointSet(coords)
    write_points_csv(ps, args.out)
    sidecar = {
        "kind": args.kind, "seed": args.seed, "n": ps.n, "dim": ps.dim,
        "planted_centers": truth.tolist() if truth is not None else None,
    }
    dump_report(sidecar, args.out + ".json")
    print(f"wrote {ps.n} points to {args.out}")
    return EXIT_OK


def cmd_fl(args) -> int:
    pts = read_points_csv(args.data)
    pts = normalize(pts).points
    inst = FLInstance(pts, pts, args.lam)
    cfg = _solve_config(args)
    if args.certify:
        sol, cert, rep = certified_solution(inst, cfg)
        payload = sol.as_dict()
        payload["lmp_report"] = rep.as_dict()
    else:
        sol = solve_fl(inst, cfg)
        payload = sol.as_dict()
    payload["constants"] = cfg.table().as_dict()
    text = dump_report(payload, args.report)
    print(text)
    return EXIT_OK


def cmd_kmeans(args) -> int:
    pts = read_points_csv(args.data)
    km = KMeansInstance(pts, args.k)
    cfg = _solve_config(args)
    sol = solve_kmeans(km, cfg)
    payload = sol.as_dict()
    payload["constants"] = cfg.table().as_dict()
    if args.oracle_ratio:
        opt, _ = bruteforce_kmeans_opt(
            KMeansInstance(normalize(pts).points, args.k))
        payload["oracle_opt"] = opt
        payload["ratio_vs_oracle"] = (sol.total_cost / opt if opt > 0
                                      else 1.0 if sol.total_cost == 0
                                      else float("inf"))
    text = dump_report(payload, args.report)
    print(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    gamma = args.gamma
    checks = []
    for name in names:
        fn = SUITES[name]
        kwargs = {}
        if args.instances is not None:
            kwargs["n_instances"] = args.instances
        if args.max_n is not None and name in ("sandwich", "lemmas", "dual"):
            kwargs["max_n"] = args.max_n
        if gamma is not None:
            kwargs["gamma"] = float(gamma)
        if name == "kmeans" and gamma is None:
            kwargs["gamma"] = PRACTICAL_GAMMA
        checks.append(fn(seed0=1000 + args.seed, **kwargs))
    passed = all(c["passed"] for c in checks)
    gamma_used = gamma if gamma is not None else THEORY_GAMMA
    payload = {"passed": passed, "checks": checks,
               "constants": make_constants(float(gamma_used)).as_dict()}
    text = dump_report(payload, args.report)
    print(text)
    return EXIT_OK if passed else EXIT_VERIFY


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    cfg = _solve_config(args)
    lines = ["n,total_rounds,peak_machine_words,global_words,messages_sent,"
             "connection_cost,n_opened"]
    rows = []
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    for n in sizes:
        d = 6
        kc = max(2, n // 64)
        centers = rng.uniform(-n / 2.0, n / 2.0, size=(kc, d))
        coords = centers[rng.integers(0, kc, size=n)] \
            + rng.normal(0, 2.0, size=(n, d))
        coords = np.unique(np.round(coords, 6), axis=0)
        pts = normalize(PointSet(coords)).points
        inst = FLInstance(pts, pts, args.lam)
        sol = solve_fl(inst, cfg)
        led = sol.ledger
        rows.append({"n": pts.n, "rounds": led.total_rounds,
                     "by_phase": dict(led.rounds_by_phase)})
        lines.append(
            f"{pts.n},{led.total_rounds},{led.peak_machine_words},"
            f"{led.global_words},{led.messages_sent},"
            f"{sol.connection_cost:.17g},{len(sol.opened)}")
    csv_text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv_text)
    print(csv_text, end="")
    if args.report:
        dump_report({"rows": rows}, args.report)
    return EXIT_OK


def cmd_spanner(args) -> int:
    from .spanner import LshParams, build_spanner, export_edges_csv
    pts = normalize(read_points_csv(args.data)).points
    params = LshParams(repetitions=args.repetitions, gamma=args.filter_gamma,
                       rotation_seed=args.seed)
    g = build_spanner(pts, args.epsilon, params)
    stats = spanner_coverage_stats(pts, g, n_pairs=args.pairs, seed=args.seed)
    stats.update({"n": pts.n, "edges": g.n_edges,
                  "budget": pts.n ** (1 + args.epsilon),
                  "gamma_eff": g.gamma_eff})
    if args.out:
        export_edges_csv(g, args.out)
    text = dump_report(stats, args.report)
    print(text)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(
        prog="mpkm",
        description="simulated massively-parallel facility location / k-means")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a dataset CSV + JSON sidecar")
    g.add_argument("--kind", choices=["gauss", "uniform", "planted"],
                   default="gauss")
    g.add_argument("--clusters", type=int, default=3)
    g.add_argument("--per-cluster", type=int, default=50)
    g.add_argument("--stddev", type=float, default=1.0)
    g.add_argument("--count", type=int, default=100)
    g.add_argument("--dim", type=int, default=4)
    g.add_argument("--spread", type=float, default=32.0)
    g.add_argument("--equal-sep", action="store_true")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen)

    f = sub.add_parser("fl", help="solve one facility-location instance")
    f.add_argument("--data", required=True)
    f.add_argument("--lam", type=float, required=True)
    f.add_argument("--certify", action="store_true")
    _add_common(f)
    f.set_defaults(fn=cmd_fl)

    k = sub.add_parser("kmeans", help="solve a k-means instance")
    k.add_argument("--data", required=True)
    k.add_argument("--k", type=int, required=True)
    k.add_argument("--oracle-ratio", action="store_true")
    _add_common(k)
    k.set_defaults(fn=cmd_kmeans)

    v = sub.add_parser("verify", help="run property suites")
    v.add_argument("--suite", choices=list(SUITES) + ["all"], default="all")
    v.add_argument("--instances", type=int, default=None)
    v.add_argument("--max-n", type=int, default=None)
    _add_common(v)
    v.set_defaults(fn=cmd_verify)

    b = sub.add_parser("bench", help="round/memory scaling table")
    b.add_argument("--sizes", default="256,512,1024")
    b.add_argument("--lam", type=float, default=16.0)
    b.add_argument("--out", default=None)
    _add_common(b)
    b.set_defaults(fn=cmd_bench)

    s = sub.add_parser("spanner", help="build and measure a metric graph")
    s.add_argument("--data", required=True)
    s.add_argument("--repetitions", type=int, default=6)
    s.add_argument("--filter-gamma", type=float, default=2.0)
    s.add_argument("--pairs", type=int, default=10000)
    s.add_argument("--out", default=None)
    _add_common(s)
    s.set_defaults(fn=cmd_spanner)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args, unknown = ap.parse_known_args(argv)
    if unknown:
        ap.error(f"unknown arguments: {unknown}")
    if getattr(args, "config", None):
        cfg = _read_config_file(args.config)
        given = {a.lstrip("-").replace("-", "_").split("=")[0]
                 for a in (argv if argv is not None else sys.argv[1:])
                 if a.startswith("--")}
        for key, val in cfg.items():
            if key in given or not hasattr(args, key):
                continue
            cur = getattr(args, key)
            caster = type(cur) if cur is not None else str
            if caster is bool:
                val = val.lower() in ("1", "true", "yes")
                setattr(args, key, val)
            else:
                setattr(args, key, caster(val))
    try:
        return args.fn(args)
    except (InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AccountingError, BuildError) as exc:
        print(f"accounting error: {exc}", file=sys.stderr)
        return EXIT_ACCOUNTING


if __name__ == "__main__":
    sys.exit(main())
