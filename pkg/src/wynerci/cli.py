"""Command-line entry point: ``wynerci {gen,solve,sweep,cluster-eval,fuse}``.

Each run writes its artifacts plus ``config.json`` (every option, defaults
applied) into ``--out``.  Passing that file back via ``--config`` reproduces
the run; explicit flags override it.

Exit codes: 0 ok, 2 invalid input, 3 I/O failure, 4 numerical consistency failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import bipartite, variational
from .errors import ConsistencyError, WynerError
from .evaluation import bayes_optimal_accuracy, clustering_accuracy, posterior_sampling_accuracy
from .fusion import (CategoricalExpert, GaussianExpert, categorical_fuse, expert_from_dict,
                     gaussian_fuse, sample_loss)
from .metrics import entropy, info_report, mutual_information
from .prob import Encoder, JointDist, marginalize
from .rng import derive_seed
from .sweep import SweepConfig, best_feasible, pareto_frontier, records_to_csv, run_sweep
from .synth import (LabeledDataset, SynthSpec, build_joint, invertible_spec, noninvertible_spec,
                    sample_dataset)

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_CONSISTENCY = 0, 2, 3, 4
CASES = {"invertible": invertible_spec, "noninvertible": noninvertible_spec}
DATA_KEY, DECODE_KEY = 1, 2


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_INVALID, f"{self.prog}: {message}")


# io helpers -------------------------------------------------------------------

def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from exc


def _read_json(path: str) -> dict:
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_INVALID, f"{path} is not valid JSON: {exc}") from exc


def _write(out: Path, name: str, text: str) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {out / name}: {exc.strerror or exc}") from exc


def _dump(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _synth(args) -> SynthSpec:
    if getattr(args, "spec", None):
        return SynthSpec.from_dict(_read_json(args.spec))
    return CASES[args.case](args.sources)


# subcommands ------------------------------------------------------------------

def cmd_gen(args, out: Path) -> str:
    spec = _synth(args)
    joint = build_joint(spec)
    _write(out, "spec.json", _dump(json.loads(spec.to_json())))
    _write(out, "joint.json", joint.to_json() + "\n")
    if args.samples > 0:
        _write(out, "dataset.csv", sample_dataset(spec, args.samples, args.seed).to_csv())
    cards = "x".join(str(c) for c in joint.spec.cardinalities)
    h_y = entropy(np.full(spec.y_cardinality, 1.0 / spec.y_cardinality))
    i12 = mutual_information(marginalize(joint, (0, 1)))
    return f"alphabets {cards}  H(Y)={h_y:.6f} bits  I(X1;X2)={i12:.6f} bits"


def cmd_solve(args, out: Path) -> str:
    if args.joint:
        joint = JointDist.from_json(_read(args.joint))
    else:
        joint = build_joint(_synth(args))
    z = args.z if args.z is not None else joint.spec.z_cardinality
    V = joint.spec.num_sources
    if args.solver == "bipartite":
        if args.kappa is not None and args.beta is not None:
            raise CliError(EXIT_INVALID, "give --kappa or --beta, not both")
        if args.kappa is not None:
            kappa = args.kappa
        else:
            kappa = bipartite.kappa_from_beta(1.0 if args.beta is None else args.beta, V)
        cfg = bipartite.BipartiteConfig(kappas=kappa, max_iters=args.max_iters, loss_tol=args.tol,
                                        restarts=args.restarts, seed=args.seed)
        res = bipartite.solve(joint, cfg, z_cardinality=z)
        runs = [(r.seed, r.encoder, r.trace, r.wall_ms) for r in res.runs]
        encoder, knob = res.encoder, kappa
    else:
        if args.kappa is not None:
            raise CliError(EXIT_INVALID, "--kappa applies to the bipartite solver; use --beta")
        knob = 1.0 if args.beta is None else args.beta
        cfg = variational.VIConfig(beta=knob, max_iters=args.max_iters, loss_tol=args.tol,
                                   restarts=args.restarts, seed=args.seed)
        res = variational.solve(joint, cfg, z_cardinality=z)
        runs = [(r.seed, variational.project_encoder(r.params), r.trace, r.wall_ms) for r in res.runs]
        encoder = res.encoder
        _write(out, "params.json", res.params.to_json() + "\n")
    extra = ["param_count"] if args.solver == "vi" else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "kappa" if args.solver == "bipartite" else "beta", "final_loss", "iterations",
                "terminated_by", "mi_z_xv", "cond_mi_sum", "wall_ms"] + extra)
    for seed, enc, trace, ms in runs:
        rep = info_report(joint, enc)
        w.writerow([seed, repr(float(knob)), repr(trace.final_loss), trace.iterations, trace.terminated_by,
                    repr(rep.mi_z_xv), repr(rep.cond_mi_sum), repr(ms) if args.record_time else ""]
                   + ([res.param_count] if extra else []))
    report = info_report(joint, encoder)
    _write(out, "encoder.json", encoder.to_json() + "\n")
    _write(out, "trace.csv", buf.getvalue())
    _write(out, "info_report.json", _dump({"seed": res.seed, "final_loss": res.trace.final_loss,
                                           "iterations": res.trace.iterations,
                                           "terminated_by": res.trace.terminated_by,
                                           **report.to_dict()}))
    return (f"{args.solver}: best seed {res.seed}  I(X^V;Z)={report.mi_z_xv:.6f} bits  "
            f"sum I(X_S;X_Sc|Z)={report.cond_mi_sum:.6f} bits")


def _sweep_config(args) -> SweepConfig:
    grid = tuple(float(v) for v in np.geomspace(args.grid_min, args.grid_max, args.grid_points))
    return SweepConfig(solver=args.solver, synth=_synth(args), grid=grid, restarts=args.restarts,
                       z_cardinality=args.z, base_seed=args.seed, max_iters=args.max_iters,
                       loss_tol=args.tol, accuracy_samples=args.samples,
                       record_time=args.record_time, threads=args.threads)


def cmd_sweep(args, out: Path) -> str:
    cfg = _sweep_config(args)
    records = run_sweep(cfg)
    _write(out, "sweep.csv", records_to_csv(records))
    _write(out, "pareto.csv", records_to_csv(pareto_frontier(records)))
    best = best_feasible(records, args.cmi_max)
    summary = {"records": len(records), "cmi_max": args.cmi_max,
               "best_feasible": None if best is None else {
                   "grid_value": best.grid_value, "seed": best.seed,
                   "mi_z_xv": best.mi_z_xv, "cond_mi_sum": best.cond_mi_sum}}
    _write(out, "summary.json", _dump(summary))
    if best is None:
        return f"{len(records)} records; none with cond_mi_sum < {args.cmi_max}"
    return (f"{len(records)} records; best with cond_mi_sum < {args.cmi_max}: "
            f"I(X^V;Z)={best.mi_z_xv:.6f} bits at grid value {best.grid_value:.6g}")


def cmd_cluster_eval(args, out: Path) -> str:
    spec = _synth(args)
    enc = Encoder.from_json(_read(args.encoder))
    if args.data:
        data = LabeledDataset.from_csv(_read(args.data), spec.source_spec(spec.y_cardinality))
    else:
        data = sample_dataset(spec, args.samples, derive_seed(args.seed, DATA_KEY))
    res = clustering_accuracy(enc, data, derive_seed(args.seed, DECODE_KEY), num_labels=spec.y_cardinality)
    doc = json.loads(res.to_json())
    doc["samples"] = len(data)
    doc["bayes_optimal_accuracy"] = bayes_optimal_accuracy(spec)
    doc["posterior_sampling_accuracy"] = posterior_sampling_accuracy(spec)
    _write(out, "cluster.json", _dump(doc))
    return f"accuracy {res.accuracy:.6f} on {len(data)} samples"


def cmd_fuse(args, out: Path) -> str:
    doc = _read_json(args.experts)
    if "experts" not in doc:
        raise CliError(EXIT_INVALID, "fusion request needs an 'experts' object")
    experts = {key: [expert_from_dict(e) for e in grp] for key, grp in doc["experts"].items()}
    if args.kappa is not None:
        kappas = {key: args.kappa for key in experts}
    elif "kappas" in doc:
        kappas = dict(doc["kappas"])
    else:
        raise CliError(EXIT_INVALID, "give --kappa or a 'kappas' object in the request")
    first = next(iter(experts.values()))[0]
    if isinstance(first, GaussianExpert):
        fused = gaussian_fuse(experts, kappas)
    elif isinstance(first, CategoricalExpert):
        fused = categorical_fuse(experts, kappas)
    else:
        raise CliError(EXIT_INVALID, "unsupported expert type")
    loss = sample_loss(experts, kappas)
    _write(out, "fused.json", _dump({"fused": fused.to_dict(), "loss_nats": loss}))
    return f"fused {len(experts)} groups; loss {loss:.6f} nats"


# parser -----------------------------------------------------------------------

def _add_synth(p, case_default="invertible"):
    p.add_argument("--spec", help="synthetic spec JSON (overrides --case/--sources)")
    p.add_argument("--case", choices=sorted(CASES), default=case_default)
    p.add_argument("--sources", type=int, default=2)


def _add_solver(p):
    p.add_argument("--solver", choices=("bipartite", "vi"), default="bipartite")
    p.add_argument("--z", type=int, default=None, help="|Z| (default: |Y| of the synthetic case)")
    p.add_argument("--max-iters", type=int, default=10_000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--restarts", type=int, default=25)
    p.add_argument("--record-time", action="store_true",
                   help="write wall-clock times (outputs then differ between runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wynerci", description="Wyner common information solvers")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="build a synthetic joint and optionally sample it")
    _add_synth(p)
    p.add_argument("--samples", type=int, default=0)

    p = sub.add_parser("solve", help="solve one instance with restarts")
    p.add_argument("--joint", help="joint JSON written by 'gen' (default: build from --case)")
    _add_synth(p)
    _add_solver(p)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)

    p = sub.add_parser("sweep", help="grid x restarts sweep")
    _add_synth(p)
    _add_solver(p)
    p.add_argument("--grid-min", type=float, default=0.1)
    p.add_argument("--grid-max", type=float, default=10.0)
    p.add_argument("--grid-points", type=int, default=20)
    p.add_argument("--samples", type=int, default=10_000, help="accuracy samples per grid value")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--cmi-max", type=float, default=0.01)

    p = sub.add_parser("cluster-eval", help="clustering accuracy of an encoder")
    p.add_argument("--encoder", required=True)
    _add_synth(p)
    p.add_argument("--data", help="dataset CSV written by 'gen' (default: sample --samples)")
    p.add_argument("--samples", type=int, default=10_000)

    p = sub.add_parser("fuse", help="fuse experts from a JSON request")
    p.add_argument("--experts", required=True)
    p.add_argument("--kappa", type=float, default=None)

    for name, sp in sub.choices.items():
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=".")
        sp.add_argument("--config", help="config.json from an earlier run")
    return parser


def _parse(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        doc = _read_json(args.config)
        if doc.get("command") != args.command:
            raise CliError(EXIT_INVALID, f"config is for {doc.get('command')!r}, not {args.command!r}")
        opts = {k: v for k, v in doc.get("options", {}).items() if k != "config"}
        sp = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sp._actions}
        unknown = set(opts) - known
        if unknown:
            raise CliError(EXIT_INVALID, f"unknown config options {sorted(unknown)}")
        sp.set_defaults(**opts)
        args = parser.parse_args(argv)
    return args


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "sweep": cmd_sweep,
            "cluster-eval": cmd_cluster_eval, "fuse": cmd_fuse}


def main(argv=None) -> int:
    try:
        args = _parse(sys.argv[1:] if argv is None else argv)
        out = Path(args.out)
        options = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
        message = COMMANDS[args.command](args, out)
        _write(out, "config.json", _dump({"command": args.command, "options": options}))
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConsistencyError as exc:
        print(f"consistency failure: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except (WynerError, ValueError, KeyError, TypeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(message)
    return EXIT_OK
