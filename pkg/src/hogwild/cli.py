"""Command-line harness: ``hogwild {stats,train,replay,sweep,delay-sweep,theory}``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
import argparse
import csv
import json
import os
import statistics
import sys

import numpy as np

from . import engine, theory
from .hypergraph import compute_stats
from .ingest import DataError, DatasetSpec, load

SWEEP_COLUMNS = ["scheduler", "threads", "delay_ns", "wall_seconds", "speedup",
                 "final_objective", "seed"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ problems

def _kv(text):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        value = json.loads(value)
    except json.JSONDecodeError:
        pass
    return key, value


def _problem_flags(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="input file in --format")
    src.add_argument("--synthetic", choices=["svm", "mc", "cut"],
                     help="generate a problem; parameters via --gen key=value")
    src.add_argument("--config", help="dataset spec as a JSON file")
    p.add_argument("--format", choices=["svmlight", "triplets", "edgelist"])
    p.add_argument("--gen", type=_kv, action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--data-seed", type=int, default=0, help="generator seed")
    p.add_argument("--lam", type=float, help="SVM regularization weight")
    p.add_argument("--rows", type=int, help="MC row count")
    p.add_argument("--cols", type=int, help="MC column count")
    p.add_argument("--rank", type=int, help="MC factor rank")
    p.add_argument("--mu", type=float, help="MC regularization weight")
    p.add_argument("-D", "--classes", dest="D", type=int, help="cut class count")
    p.add_argument("--terminals", help="cut terminal file")
    p.add_argument("--n", type=int, help="variable/node count (svmlight, edgelist)")
    p.add_argument("--test-fraction", type=float, default=0.0,
                   help="fraction of examples/entries held out from a data file")


def dataset_from_args(args):
    """JSON-able description sufficient to rebuild the problem."""
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                spec = DatasetSpec.from_json(fh.read())
        except OSError as exc:
            raise DataError(f"cannot open {args.config}: {exc.strerror}") from None
        except (TypeError, json.JSONDecodeError) as exc:
            raise DataError(f"bad dataset spec: {exc}") from None
    elif args.synthetic:
        spec = DatasetSpec("synthetic", None, {"kind": args.synthetic, **dict(args.gen)},
                           args.data_seed)
    else:
        if not args.format:
            raise UsageError("--data needs --format")
        spec = DatasetSpec(args.format, os.path.abspath(args.data))
    parse = {}
    if spec.format == "svmlight":
        parse = {"n": args.n}
    elif spec.format == "triplets":
        if args.rows is None or args.cols is None:
            raise UsageError("triplets need --rows and --cols")
        parse = {"n_r": args.rows, "n_c": args.cols}
    elif spec.format == "edgelist":
        parse = {"D": args.D or 2, "n": args.n,
                 "terminals": os.path.abspath(args.terminals) if args.terminals else None}
    overrides = {k: getattr(args, k) for k in ("lam", "rank", "mu")
                 if getattr(args, k) is not None}
    if not 0 <= args.test_fraction < 1:
        raise UsageError("--test-fraction must lie in [0, 1)")
    out = spec.to_dict()
    out.update(parse=parse, overrides=overrides, test_fraction=args.test_fraction)
    return out


def build_problem(dataset):
    """``(problem, holdout)`` for a dataset description."""
    spec = DatasetSpec(dataset["format"], dataset.get("path"), dict(dataset.get("params", {})),
                       dataset.get("seed", 0))
    parse = {k: v for k, v in dataset.get("parse", {}).items() if v is not None}
    try:
        problem, holdout, _ = load(spec, **parse)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(str(exc)) from None
    problem, holdout = _apply_overrides(problem, holdout, dataset.get("overrides", {}))
    frac = dataset.get("test_fraction", 0.0)
    if frac and problem.kind != "cut":
        problem, holdout = _split(problem, frac, spec.seed)
    return problem, holdout


def _apply_overrides(problem, holdout, over):
    if problem.kind == "svm" and "lam" in over:
        problem = problem.with_lambda(over["lam"])
        holdout = holdout.with_lambda(over["lam"]) if holdout is not None else None
    if problem.kind == "mc" and ("rank" in over or "mu" in over):
        r = over.get("rank", problem.r)
        problem = problem.with_rank(r, over.get("mu"))
        holdout = holdout.with_rank(r, over.get("mu")) if holdout is not None else None
    return problem, holdout


def _split(problem, frac, seed):
    rng = np.random.default_rng([seed, 7])
    perm = rng.permutation(problem.n_edges)
    cut = int(round(frac * problem.n_edges))
    test, train = np.sort(perm[:cut]), np.sort(perm[cut:])
    if problem.kind == "svm":
        return problem.subset(train), problem.subset(test)
    from .problems import McProblem

    def part(ix):
        return McProblem(problem.rows[ix], problem.cols[ix], problem.vals[ix],
                         problem.n_r, problem.n_c, problem.r, problem.mu)
    return part(train), part(test)


def test_metric(problem, holdout, x):
    """Held-out misclassification rate (SVM) or RMSE (MC); None for cuts."""
    if holdout is None or holdout.n_edges == 0:
        return None
    if problem.kind == "svm":
        return float(holdout.error_rate(x))
    if problem.kind == "mc":
        return float(holdout.rmse(x))
    return None


def problem_info(problem):
    info = {"kind": problem.kind, "n_edges": int(problem.n_edges), "dim": int(problem.dim)}
    if problem.kind == "svm":
        info["lam"] = float(problem.lam)
    elif problem.kind == "mc":
        info.update(rank=int(problem.r), mu=float(problem.mu))
    else:
        info["D"] = int(problem.D)
    return info


def stats_dict(problem, sampled=None, seed=0):
    h = problem.hypergraph()
    if sampled:
        st = compute_stats(h, mode="sampled", k=sampled, seed=seed)
    else:
        st = compute_stats(h)
    return {"omega": int(st.omega), "delta": float(st.delta), "rho": float(st.rho),
            "n": int(h.n), "edges": int(h.n_edges), "exact": bool(st.exact)}


# ------------------------------------------------------------------ commands

def cmd_stats(args):
    problem, _ = build_problem(dataset_from_args(args))
    print(json.dumps(stats_dict(problem, args.sampled, args.seed)))
    return 0


def _run_flags(p, single_threads=True):
    p.add_argument("--gamma", type=float, help="initial stepsize gamma0")
    p.add_argument("--beta", type=float, default=0.9, help="per-epoch stepsize factor")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=engine.MODES, default="without-replacement")
    if single_threads:
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--delay-ns", type=int, default=0)
    p.add_argument("--gamma-search", action="store_true",
                   help="heuristic: doubling/halving probe of 2 epochs per candidate")


def _schedule(args, problem, config):
    if args.gamma is None and not args.gamma_search:
        raise UsageError("--gamma is required (or use --gamma-search)")
    if args.gamma is not None and not args.gamma > 0:
        raise UsageError("--gamma must be positive")
    gamma = args.gamma
    if args.gamma_search:
        gamma = engine.gamma_search(problem, config, gamma or 1.0 / problem.n_edges, args.beta)
    return engine.StepSchedule(gamma, args.beta)


def _config(args, scheduler, threads, delay_ns):
    try:
        return engine.RunConfig(threads, args.epochs, args.mode, args.seed, delay_ns, scheduler)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def train_document(problem, holdout, dataset, config, schedule, stats):
    rep = engine.run(problem, config, schedule)
    body = rep.to_dict()
    body["test_metric"] = test_metric(problem, holdout, rep.x)
    doc = {"report": body,
           "config": {"threads": config.threads, "epochs": config.epochs, "mode": config.mode,
                      "seed": config.seed, "delay_ns": config.delay_ns,
                      "scheduler": config.scheduler},
           "schedule": {"gamma0": schedule.gamma0, "beta": schedule.beta},
           "problem": problem_info(problem), "dataset": dataset, "stats": stats}
    return rep, doc


def _summary(doc):
    r = doc["report"]
    tm = r["test_metric"]
    return (f"{r['scheduler']} threads={r['threads']} epochs={r['epochs']} "
            f"objective={r['objectives'][-1]:.6g} "
            f"test_metric={'n/a' if tm is None else format(tm, '.4g')} "
            f"wall={r['wall_seconds']:.3f}s digest={r['x_sha256'][:12]}")


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def cmd_train(args):
    dataset = dataset_from_args(args)
    problem, holdout = build_problem(dataset)
    config = _config(args, args.scheduler, args.threads, args.delay_ns)
    schedule = _schedule(args, problem, config)
    _, doc = train_document(problem, holdout, dataset, config, schedule, stats_dict(problem))
    if args.out:
        _write_json(args.out, doc)
    print(_summary(doc))
    return 0


def replay(doc):
    """Re-run the experiment a train report describes; returns the new report."""
    problem, holdout = build_problem(doc["dataset"])
    c = doc["config"]
    config = engine.RunConfig(c["threads"], c["epochs"], c["mode"], c["seed"], c["delay_ns"],
                              c["scheduler"])
    schedule = engine.StepSchedule(doc["schedule"]["gamma0"], doc["schedule"]["beta"])
    _, new = train_document(problem, holdout, doc["dataset"], config, schedule, doc["stats"])
    return new


def cmd_replay(args):
    try:
        with open(args.report, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot open {args.report}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"bad report: {exc}") from None
    new = replay(doc)
    same = new["report"]["x_sha256"] == doc["report"]["x_sha256"]
    print(f"{_summary(new)} matches_original={str(same).lower()}")
    if args.out:
        _write_json(args.out, new)
    return 0


def _int_list(text):
    out = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(float(part)))
    return out


def _timed_rows(problem, args, scheduler, threads, delay_ns, schedule):
    config = _config(args, scheduler, threads, delay_ns)
    reps = [engine.run(problem, config, schedule) for _ in range(args.repeats)]
    return reps


def _emit_sweep(args, problem, dataset, schedule, groups):
    """``groups`` maps (scheduler, threads, delay) to run reports.  Speedup
    is the median serial wall time over the group's median wall time, with
    the serial reference taken at the same delay."""
    serial_wall = {d: statistics.median(r.wall_seconds for r in reps)
                   for (s, _, d), reps in groups.items() if s == "serial"}
    rows = []
    for (sched, threads, delay), reps in groups.items():
        if sched not in args._emit:
            continue
        med = statistics.median(r.wall_seconds for r in reps)
        speedup = serial_wall[delay] / med if med > 0 else float("inf")
        for r in reps:
            rows.append({"scheduler": sched, "threads": threads, "delay_ns": delay,
                         "wall_seconds": r.wall_seconds, "speedup": speedup,
                         "final_objective": r.final_objective, "seed": r.seed})
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.DictWriter(out, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            out.close()
    if args.out:
        meta = {"seed": args.seed, "gamma0": schedule.gamma0, "beta": schedule.beta,
                "epochs": args.epochs, "repeats": args.repeats, "mode": args.mode,
                "dataset": dataset, "problem": problem_info(problem),
                "stats": stats_dict(problem), "columns": SWEEP_COLUMNS,
                "median_wall_seconds": {f"{s}/{t}/{d}": statistics.median(
                    r.wall_seconds for r in reps) for (s, t, d), reps in groups.items()},
                "test_metric": {f"{s}/{t}/{d}": test_metric(problem, args._holdout, reps[-1].x)
                                for (s, t, d), reps in groups.items()}}
        _write_json(args.out + ".meta.json", meta)
    return rows


def cmd_sweep(args):
    dataset = dataset_from_args(args)
    problem, holdout = build_problem(dataset)
    schedulers = [s.strip() for s in args.schedulers.split(",") if s.strip()]
    for s in schedulers:
        if s not in engine.SCHEDULERS:
            raise UsageError(f"unknown scheduler {s!r}; choose from {engine.SCHEDULERS}")
    threads = _int_list(args.threads)
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    schedule = _schedule(args, problem, _config(args, "serial", 1, 0))
    groups = {("serial", 1, 0): _timed_rows(problem, args, "serial", 1, 0, schedule)}
    for s in schedulers:
        for p in ([1] if s == "serial" else threads):
            if (s, p, 0) not in groups:
                groups[(s, p, 0)] = _timed_rows(problem, args, s, p, 0, schedule)
    args._emit, args._holdout = set(schedulers), holdout
    _emit_sweep(args, problem, dataset, schedule, groups)
    return 0


def cmd_delay_sweep(args):
    dataset = dataset_from_args(args)
    problem, holdout = build_problem(dataset)
    delays = [int(float(d)) for d in args.delays.split(",")]
    if any(d < 0 for d in delays):
        raise UsageError("delays must be nonnegative")
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    schedule = _schedule(args, problem, _config(args, "serial", 1, 0))
    groups = {}
    for d in delays:
        groups[("serial", 1, d)] = _timed_rows(problem, args, "serial", 1, d, schedule)
        for s in ("hogwild", "rr"):
            groups[(s, args.threads, d)] = _timed_rows(problem, args, s, args.threads, d,
                                                       schedule)
    args._emit, args._holdout = {"serial", "hogwild", "rr"}, holdout
    _emit_sweep(args, problem, dataset, schedule, groups)
    return 0


def cmd_theory(args):
    if args.estimate_from:
        problem, _ = build_problem(dataset_from_args(args.estimate_from))
        est = theory.estimate_constants(problem, tau=args.tau, seed=args.seed)
        pc = theory.ProblemConstants(args.c or est.c, args.L or est.L, args.M or est.M,
                                     est.omega, est.delta, est.rho, args.tau)
    else:
        missing = [k for k in ("c", "L", "M") if getattr(args, k) is None]
        if missing:
            raise UsageError("missing constants: " + ", ".join("--" + k for k in missing))
        try:
            pc = theory.ProblemConstants(args.c, args.L, args.M, args.omega, args.delta,
                                         args.rho, args.tau)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    try:
        report = theory.theory_report(pc, args.epsilon, args.theta, args.D0, args.beta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(json.dumps(report))
    return 0


# ------------------------------------------------------------------ parsing

def build_parser():
    parser = _Parser(prog="hogwild", description="Lock-free parallel SGD experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("stats", help="hypergraph statistics as JSON")
    _problem_flags(p)
    p.add_argument("--sampled", type=int, metavar="K", help="estimate from K sampled edges")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="one training run; writes a JSON report")
    _problem_flags(p)
    p.add_argument("--scheduler", default="hogwild", choices=engine.SCHEDULERS)
    _run_flags(p)
    p.add_argument("--out", help="report path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("replay", help="re-run the experiment recorded in a train report")
    p.add_argument("report")
    p.add_argument("--out", help="path for the new report")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("sweep", help="thread sweep; writes CSV")
    _problem_flags(p)
    p.add_argument("--schedulers", default="hogwild,rr,aig,serial")
    p.add_argument("--threads", default="1-10", help="list or range, e.g. 1,2,4 or 1-10")
    p.add_argument("--repeats", type=int, default=3)
    _run_flags(p, single_threads=False)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("delay-sweep", help="serial/hogwild/rr under injected gradient delays")
    _problem_flags(p)
    p.add_argument("--delays", default="0,1e3,1e4,1e5,1e6", help="nanoseconds, comma list")
    p.add_argument("--threads", type=int, default=4)
    p.add_argument("--repeats", type=int, default=3)
    _run_flags(p, single_threads=False)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_delay_sweep)

    p = sub.add_parser("theory", help="stepsize, iteration count and backoff bounds")
    for name in ("c", "L", "M"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--omega", type=int, default=1)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--tau", type=int, default=0)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--D0", type=float, default=1.0, help="initial squared distance bound")
    p.add_argument("--beta", type=float, help="backoff factor (default: optimal)")
    p.add_argument("--estimate-from", metavar="SPEC_JSON",
                   help="estimate c, L, M and graph statistics from a dataset spec file")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_theory)
    return parser


def _estimate_args(path):
    ns = argparse.Namespace(config=path, synthetic=None, data=None, format=None, gen=[],
                            data_seed=0, lam=None, rows=None, cols=None, rank=None, mu=None,
                            D=None, terminals=None, n=None, test_fraction=0.0)
    return ns


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "estimate_from", None):
        args.estimate_from = _estimate_args(args.estimate_from)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hogwild {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ValueError) as exc:
        print(f"hogwild {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
