"""Command line for solves, sweeps, transport, eigen, residual checks, and
config-driven experiments.

Verbs:
    plimit solve  --domain d.json --measure m.json --p 10 --out report.json
    plimit sweep  --domain d.json --measure m.json --p-list 2,4,8 --out dir
    plimit transport --domain d.json --measure m.json [--kr] [--flow-csv f.csv]
    plimit eigen  --domain d.json --p 50 --kind lambda|sigma
    plimit check  --domain d.json --field u.csv --measure m.json
    plimit demo-poisson-learning --config c.json
    plimit run    --config c.json [--config more.json ...]

Exit code 0 when every enabled assertion passed, 1 otherwise.
PLIMIT_THREADS caps the workers used by `run` with several configs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .calculus import lipschitz_constant, load_field_csv, save_field_csv, sup_norm
from .domain import domain_from_descriptor
from .errors import PlimitError
from .experiment import demo_poisson_learning, run_batch, run_experiment
from .measures import measure_from_descriptor
from .solver import SolveOptions, continuation_sweep, solve_p_poisson
from .spectral import EigenOptions, morrey_sigma_p, rayleigh_lambda_p
from .transport import kr_norm, w1_geodesic
from .viscosity import classify_regions, eikonal_split_residuals, pde_residuals


def _load_domain(path):
    return domain_from_descriptor(path)


def _load_measure(dom, path):
    return measure_from_descriptor(dom, path)


def _dump(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _cmd_solve(args):
    dom = _load_domain(args.domain)
    mu = _load_measure(dom, args.measure)
    report = solve_p_poisson(dom, mu, args.p, SolveOptions())
    payload = report.to_dict()
    payload["field"] = list(map(float, report.u.values))
    _dump(payload, args.out)
    return 0 if report.converged else 1


def _cmd_sweep(args):
    dom = _load_domain(args.domain)
    mu = _load_measure(dom, args.measure)
    p_list = [float(p) for p in args.p_list.split(",")]
    reports = continuation_sweep(dom, mu, p_list, SolveOptions())
    out_dir = Path(args.out or "plimit_sweep")
    out_dir.mkdir(parents=True, exist_ok=True)
    for r in reports:
        save_field_csv(r.u, out_dir / f"u_p{r.p:g}.csv")
    _dump([r.to_dict() for r in reports], out_dir / "sweep.json")
    print(f"wrote {out_dir}/sweep.json and {len(reports)} field files")
    return 0 if all(r.converged for r in reports) else 1


def _cmd_transport(args):
    dom = _load_domain(args.domain)
    mu = _load_measure(dom, args.measure)
    result = kr_norm(dom, mu) if args.kr else w1_geodesic(dom, mu)
    if args.flow_csv:
        with open(args.flow_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["from", "to", "flow"])
            for (a, b), f in sorted(result.flow().items()):
                writer.writerow([a, b, repr(f)])
    _dump({"value": result.value, "gap": result.gap,
           "kind": "kr" if args.kr else "w1",
           "potential_sup": sup_norm(result.potential),
           "potential_lip": lipschitz_constant(result.potential)}, args.out)
    return 0


def _cmd_eigen(args):
    dom = _load_domain(args.domain)
    opts = EigenOptions(seed=args.seed)
    fn = {"lambda": rayleigh_lambda_p, "sigma": morrey_sigma_p}[args.kind]
    est = fn(dom, args.p, opts)
    _dump(est.to_dict(), args.out)
    return 0 if est.converged else 1


def _cmd_check(args):
    dom = _load_domain(args.domain)
    mu = _load_measure(dom, args.measure)
    u = load_field_csv(dom, args.field)
    labels = classify_regions(mu)
    residuals = pde_residuals(u, labels)
    split = eikonal_split_residuals(u, labels)
    payload = {"regions": labels.counts(),
               "pde_residual_norms": residuals.norms(),
               "eikonal_split_norms": split.norms(),
               "kink_nodes": int(residuals.kink_mask.sum())}
    if args.residual_csv:
        with open(args.residual_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node_index", "label", "r_plus", "r_zero",
                             "r_minus", "kink"])
            for i in range(dom.n_nodes):
                writer.writerow([i, int(labels.labels[i]),
                                 repr(float(residuals.r_plus[i])),
                                 repr(float(residuals.r_zero[i])),
                                 repr(float(residuals.r_minus[i])),
                                 int(residuals.kink_mask[i])])
    _dump(payload, args.out)
    return 0


def _cmd_demo(args):
    report = demo_poisson_learning(args.config, args.out_dir)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0 if report["ok"] else 1


def _cmd_run(args):
    reports = run_batch(list(args.config))
    for cfg, report in zip(args.config, reports):
        status = "ok" if report["ok"] else "FAILED"
        print(f"{cfg}: {status} (hash {report['config_hash'][:12]})")
    return 0 if all(r["ok"] for r in reports) else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plimit",
        description="p-Poisson sweeps, transport duality, and limit checks "
                    "on masked grids")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="single variational solve")
    sp.add_argument("--domain", required=True)
    sp.add_argument("--measure", required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--out")
    sp.set_defaults(fn=_cmd_solve)

    sp = sub.add_parser("sweep", help="warm-started exponent sweep")
    sp.add_argument("--domain", required=True)
    sp.add_argument("--measure", required=True)
    sp.add_argument("--p-list", required=True,
                    help="comma-separated ascending exponents")
    sp.add_argument("--out")
    sp.set_defaults(fn=_cmd_sweep)

    sp = sub.add_parser("transport", help="exact W1 / KR flow solve")
    sp.add_argument("--domain", required=True)
    sp.add_argument("--measure", required=True)
    sp.add_argument("--kr", action="store_true", help="KR norm (bank node)")
    sp.add_argument("--flow-csv", help="dump directed flows as from,to,flow")
    sp.add_argument("--out")
    sp.set_defaults(fn=_cmd_transport)

    sp = sub.add_parser("eigen", help="eigenvalue / Morrey-constant estimate")
    sp.add_argument("--domain", required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--kind", choices=["lambda", "sigma"], default="lambda")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(fn=_cmd_eigen)

    sp = sub.add_parser("check", help="limiting-PDE residuals of a field")
    sp.add_argument("--domain", required=True)
    sp.add_argument("--field", required=True, help="CSV node_index,value")
    sp.add_argument("--measure", required=True)
    sp.add_argument("--residual-csv", help="per-node residual dump")
    sp.add_argument("--out")
    sp.set_defaults(fn=_cmd_check)

    sp = sub.add_parser("demo-poisson-learning",
                        help="balanced two-class label demo")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out-dir")
    sp.set_defaults(fn=_cmd_demo)

    sp = sub.add_parser("run", help="config-driven experiment(s)")
    sp.add_argument("--config", action="append", required=True)
    sp.set_defaults(fn=_cmd_run)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except PlimitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
