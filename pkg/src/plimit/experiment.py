"""Config-driven experiment runner: sweeps, checks, reports, and plots.

An experiment builds a domain and a measure from JSON descriptors, runs a
warm-started exponent sweep, optionally cross-checks the final field
against the flow-based transport value, the eigenvalue roots, and the
limiting-PDE residuals, and writes everything to an output directory:

    report.json   all scalar diagnostics, config hash, package versions
    fields/*.csv  solved fields per exponent
    plots/*.svg   solution overlays and diagnostic curves

Runs are deterministic: the only randomness (eigen multi-starts) is seeded
from the config, so identical configs produce identical reports.  The
PLIMIT_THREADS environment variable caps the worker count used when a
batch of experiments runs in parallel; a single experiment is sequential.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .calculus import ScalarField, save_field_csv
from .domain import domain_from_descriptor, geodesic_diameter, lambda_infinity
from .errors import ConfigError, UnbalancedLabels
from .measures import (SignedMeasure, check_compatibility, jordan_decompose,
                       measure_from_descriptor, poisson_learning_measure)
from .solver import SolveOptions, analytic_1d_solution, continuation_sweep
from .spectral import EigenOptions, morrey_sigma_p, rayleigh_lambda_p
from .svgplot import line_plot_svg
from .transport import dual_pairing, kantorovich_gap, w1_geodesic
from .viscosity import classify_regions, mean_value_check, pde_residuals, ut_family

DEFAULT_P_LIST = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0]


def worker_count():
    """Parallel worker cap from PLIMIT_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("PLIMIT_THREADS", "1")))
    except ValueError:
        return 1


def config_hash(config):
    return hashlib.sha256(
        json.dumps(config, sort_keys=True).encode()).hexdigest()


def _versions():
    import numpy
    import scipy

    return {"plimit": __version__, "numpy": numpy.__version__,
            "scipy": scipy.__version__}


def load_config(source):
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        cfg = json.loads(path.read_text())
        cfg.setdefault("_base_dir", str(path.parent))
        return cfg
    return dict(source)


def _solver_options(config):
    opts = SolveOptions()
    for key, value in config.get("solver", {}).items():
        if not hasattr(opts, key):
            raise ConfigError(f"unknown solver option {key!r}")
        setattr(opts, key, value)
    return opts


def _build_measure(dom, config):
    desc = config.get("measure")
    if desc is None:
        raise ConfigError("config needs a 'measure' entry")
    base = config.get("_base_dir")
    if isinstance(desc, dict) and "family" in desc:
        table = {float(p): m for p, m in desc["family"]}

        def family(p):
            if float(p) not in table:
                raise ConfigError(f"measure family has no entry for p={p}")
            return measure_from_descriptor(dom, table[float(p)], base)

        return family
    return measure_from_descriptor(dom, desc, base)


def _measure_at_largest_p(mu, p_list):
    if callable(mu):
        return mu(p_list[-1]) if p_list else None
    return mu


def _check_transport(dom, mu, final_u):
    w1 = w1_geodesic(dom, mu)
    gap = kantorovich_gap(final_u, mu, w1=w1)
    from .calculus import lipschitz_constant

    lip = lipschitz_constant(final_u)
    ok = (gap <= 0.05 * w1.value + 1e-12
          and lip <= 1.05
          and abs(w1.gap) <= 1e-9 * max(w1.value, 1.0))
    return {"w1_value": w1.value, "flow_gap": w1.gap,
            "kantorovich_gap": gap, "pairing": dual_pairing(final_u, mu),
            "lip_const": lip, "ok": ok}


def _check_eigen(dom, config, seed):
    params = config.get("eigen", {})
    p = float(params.get("p", 50.0))
    opts = EigenOptions(seed=seed,
                        random_starts=int(params.get("random_starts", 3)),
                        max_iters=int(params.get("max_iters", 200)))
    target = lambda_infinity(dom)
    out = {"p": p, "target": target}
    ok = True
    for kind, fn in (("lambda", rayleigh_lambda_p), ("sigma", morrey_sigma_p)):
        if kind in params.get("kinds", ["lambda", "sigma"]):
            est = fn(dom, p, opts)
            out[kind] = est.to_dict()
            ok = ok and abs(est.root - target) <= 0.10 * target
    out["ok"] = ok
    return out


def _check_viscosity(dom, mu, final_u):
    labels = classify_regions(mu)
    report = pde_residuals(final_u, labels)
    ok = mean_value_check(final_u, tol=0.05)
    return {"regions": labels.counts(), "residual_norms": report.norms(),
            "kink_nodes": int(report.kink_mask.sum()),
            "mean_value_ok": ok, "ok": ok}


def run_experiment(config, output_dir=None):
    """Run one configured experiment; returns the report dict.

    Writes report.json, per-exponent field CSVs, and SVG plots under the
    output directory.  The report's "ok" flag is the conjunction of all
    enabled check assertions.
    """
    config = load_config(config)
    out_dir = Path(output_dir or config.get("output_dir", "plimit_out"))
    (out_dir / "fields").mkdir(parents=True, exist_ok=True)
    (out_dir / "plots").mkdir(parents=True, exist_ok=True)

    hashable = {k: v for k, v in config.items() if not k.startswith("_")}
    seed = int(config.get("seed", 0))
    p_list = [float(p) for p in config.get("p_list", DEFAULT_P_LIST)]
    if any(b <= a for a, b in zip(p_list, p_list[1:])):
        raise ConfigError("p_list must be strictly ascending")
    try:
        dom = domain_from_descriptor(config["domain"], config.get("_base_dir"))
    except KeyError:
        raise ConfigError("config needs a 'domain' entry")
    except FileNotFoundError as exc:
        raise ConfigError(str(exc))

    report = {
        "config_hash": config_hash(hashable),
        "versions": _versions(),
        "seed": seed,
        "domain": {"dim": dom.dim, "n_nodes": dom.n_nodes,
                   "n_edges": dom.n_edges, "h": dom.h,
                   "stencil": dom.neighborhood},
        "sweep": [],
        "checks": {},
    }

    mu = _build_measure(dom, config) if "measure" in config else None
    reports = []
    if p_list and mu is not None:
        reports = continuation_sweep(dom, mu, p_list, _solver_options(config))
        report["sweep"] = [r.to_dict() for r in reports]
        for r in reports:
            save_field_csv(r.u, out_dir / "fields" / f"u_p{r.p:g}.csv")
        _plot_sweep(dom, reports, config, out_dir)

    checks = config.get("checks", [])
    final_u = reports[-1].u if reports else None
    mu_final = _measure_at_largest_p(mu, p_list) if mu is not None else None
    ok = all(r.converged for r in reports)
    for check in checks:
        if check in ("transport", "transport_gap"):
            result = _check_transport(dom, mu_final, final_u)
        elif check == "eigen":
            result = _check_eigen(dom, config, seed)
        elif check == "viscosity":
            result = _check_viscosity(dom, mu_final, final_u)
        else:
            raise ConfigError(f"unknown check {check!r}")
        report["checks"][check] = result
        ok = ok and result["ok"]
    report["ok"] = bool(ok)

    if config.get("ut_family_plot"):
        _plot_ut_family(dom, [float(t) for t in config["ut_family_plot"]], out_dir)

    with open(out_dir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return report


def _plot_sweep(dom, reports, config, out_dir):
    if dom.dim == 1:
        order = np.argsort(dom.coords[:, 0])
        xs = dom.coords[order, 0]
        curves = [(xs, r.u.values[order], f"p={r.p:g}") for r in reports]
        if config.get("plot_analytic_family"):
            for r in reports:
                curves.append((xs, analytic_1d_solution(xs, r.p), ""))
        line_plot_svg(out_dir / "plots" / "sweep_fields.svg", curves,
                      title="solutions along the exponent sweep",
                      xlabel="x", ylabel="u")
    ps = [r.p for r in reports]
    diag = [
        (ps, [r.sup_norm for r in reports], "sup norm"),
        (ps, [r.lip_const for r in reports], "Lipschitz"),
        (ps, [r.pairing for r in reports], "pairing"),
        (ps, [r.energy_bound_ratio for r in reports], "energy ratio"),
    ]
    line_plot_svg(out_dir / "plots" / "sweep_diagnostics.svg", diag,
                  title="sweep diagnostics", xlabel="p", ylabel="value")


def _plot_ut_family(dom, t_values, out_dir):
    xs = np.linspace(-1.0, 1.0, 401)
    curves = [(xs, ut_family(xs, t), f"t={t:g}") for t in t_values]
    line_plot_svg(out_dir / "plots" / "ut_family.svg", curves,
                  title="one-parameter family of limiting solutions",
                  xlabel="x", ylabel="u")


def demo_poisson_learning(config, output_dir=None):
    """Two-class label-propagation demo on centered Dirac label data.

    Needs balanced +1/-1 labels; sweeps the exponent, then reports how well
    the final field's dual pairing matches the flow-computed transport
    value between the two empirical label measures, and the sign-based
    classification at every node.
    """
    config = load_config(config)
    out_dir = Path(output_dir or config.get("output_dir", "plimit_poisson_out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    dom = domain_from_descriptor(config["domain"], config.get("_base_dir"))

    labeled = []
    for entry in config.get("labels", []):
        if len(entry) == 2:
            labeled.append((int(entry[0]), float(entry[1])))
        else:
            labeled.append((dom.nearest_node(entry[:-1]), float(entry[-1])))
    values = [g for _, g in labeled]
    if not values or any(g not in (1.0, -1.0) for g in values):
        raise UnbalancedLabels("labels must be +1 or -1")
    if values.count(1.0) != values.count(-1.0):
        raise UnbalancedLabels(
            f"{values.count(1.0)} positive vs {values.count(-1.0)} negative "
            "labels; the balanced demo needs equal counts")

    mu = poisson_learning_measure(dom, labeled)
    assert check_compatibility(mu, 1e-12)
    p_list = [float(p) for p in config.get("p_list", DEFAULT_P_LIST)]
    reports = continuation_sweep(dom, mu, p_list, _solver_options(config))
    final = reports[-1]

    w1 = w1_geodesic(dom, mu)
    gap = kantorovich_gap(final.u, mu, w1=w1)
    signs = np.sign(final.u.values)
    agreement = [int(signs[n]) == int(g) for n, g in labeled]
    report = {
        "config_hash": config_hash({k: v for k, v in config.items()
                                    if not k.startswith("_")}),
        "versions": _versions(),
        "sweep": [r.to_dict() for r in reports],
        "w1_value": w1.value,
        "kantorovich_gap": gap,
        "gap_fraction": gap / w1.value if w1.value else 0.0,
        "label_agreement": int(sum(agreement)),
        "n_labels": len(agreement),
        "ok": bool(all(agreement) and gap <= 0.05 * w1.value + 1e-12),
    }
    save_field_csv(final.u, out_dir / "labeling_field.csv")
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return report


def run_batch(configs, output_dirs=None):
    """Run several experiments, in parallel when PLIMIT_THREADS allows."""
    configs = list(configs)
    if output_dirs is None:
        output_dirs = [None] * len(configs)
    workers = min(worker_count(), len(configs)) or 1
    if workers == 1:
        return [run_experiment(c, d) for c, d in zip(configs, output_dirs)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_experiment, c, d)
                   for c, d in zip(configs, output_dirs)]
        return [f.result() for f in futures]
