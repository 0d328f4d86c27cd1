"""Rayleigh-quotient estimates of the first nontrivial Neumann eigenvalues.

Two quotients are minimized over fields with vanishing generalized mean:

    lambda_p:  sum |grad u|^p vol / sum |u|^p vol
    sigma_p:   sum |grad u|^p vol / max |u|^p

Both p-th roots approach 2/diam as p grows, which is what the consistency
checks of the package consume.  The minimization is nonconvex, so the
estimates carry upper-bound semantics: each run descends the log-quotient
with backtracking from several starts (seeded random fields plus one
geodesic tent anchored at a diameter endpoint) and keeps the smallest
value.  The sup-norm denominator of sigma_p is smoothed during descent by
an L^m norm with m = 4p (capped at 400) and the returned value is
re-evaluated with the true maximum.

Quotients are handled entirely through logarithms of rescaled sums, so
exponents in the hundreds neither overflow nor underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .calculus import ScalarField, gradient_field, sup_norm
from .domain import farthest_pair, geodesic_distance
from .solver import (_grad_ops, _metric_matrix, _power_weights,
                     normalize_generalized_mean)


@dataclass
class EigenOptions:
    max_iters: int = 200
    rel_tol: float = 1e-10
    random_starts: int = 3
    seed: int = 0
    smoothing: float | None = None  # sigma only; default min(4p, 400)
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 50


@dataclass
class EigenEstimate:
    """Upper-bound estimate of an eigenvalue with its p-th root."""

    p: float
    value: float
    root: float
    minimizer: ScalarField
    iterations: int
    converged: bool
    log_value: float

    def to_dict(self):
        return {"p": self.p, "value": self.value, "root": self.root,
                "iterations": self.iterations, "converged": self.converged}


def _log_numerator(dom, values, p):
    """log sum |grad u|^p vol, plus the data needed for its gradient."""
    g = gradient_field(ScalarField(dom, values))
    s = np.linalg.norm(g, axis=1)
    top = float(np.max(s))
    if top == 0.0:
        return -math.inf, None
    sh, gh = s / top, g / top
    nhat = float(np.sum(sh ** p)) * dom.cell_volume
    log_n = p * math.log(top) + math.log(nhat)
    coef = _power_weights(sh, p - 2.0)
    grad = np.zeros(len(values))
    for axis in range(dom.dim):
        grad += dom.cell_volume * (_grad_ops(dom)[axis].T @ (coef * gh[:, axis]))
    grad *= p / (top * nhat)
    return log_n, (grad, gh, sh)


def _log_lp_denominator(values, p, vol):
    top = float(np.max(np.abs(values)))
    if top == 0.0:
        return -math.inf, None
    vh = values / top
    dhat = float(np.sum(np.abs(vh) ** p)) * vol
    grad = p * vol * _power_weights(np.abs(vh), p - 2.0) * vh / (top * dhat)
    return p * math.log(top) + math.log(dhat), grad


def _log_smooth_max_denominator(values, p, m, vol):
    """p * log lm_norm(u, m) and its gradient."""
    top = float(np.max(np.abs(values)))
    if top == 0.0:
        return -math.inf, None
    vh = values / top
    shat = float(np.sum(np.abs(vh) ** m)) * vol
    log_lm = math.log(top) + math.log(shat) / m
    grad = p * vol * _power_weights(np.abs(vh), m - 2.0) * vh / (top * shat)
    return p * log_lm, grad


def _descend_quotient(dom, p, u0, opts, denominator):
    """Minimize log N - log D from one start; returns (log value, u, iters, ok)."""
    def project(values):
        u = normalize_generalized_mean(ScalarField(dom, values), p)
        top = float(np.max(np.abs(u.values)))
        if top == 0.0:
            return None
        return u.values / top

    def phi(values):
        log_n, ndata = _log_numerator(dom, values, p)
        log_d, ddata = denominator(values)
        if not (math.isfinite(log_n) and math.isfinite(log_d)):
            return math.inf, None
        grad = None
        if ndata is not None and ddata is not None:
            grad = ndata[0] - ddata
        return log_n - log_d, grad

    values = project(u0)
    if values is None:
        return math.inf, ScalarField.zeros(dom), 0, False
    f, grad = phi(values)
    iters = 0
    stalls = 0
    converged = False
    while iters < opts.max_iters:
        iters += 1
        g_field = gradient_field(ScalarField(dom, values))
        s = np.linalg.norm(g_field, axis=1)
        top = max(float(np.max(s)), 1e-300)
        H = _metric_matrix(dom, p, g_field / top, s / top, 1e-8)
        reg = max(1e-10 * float(np.max(H.diagonal())) if H.nnz else 0.0, 1e-30)
        try:
            direction = spsolve((H + reg * sp.identity(dom.n_nodes)).tocsc(), -grad)
        except RuntimeError:
            direction = -grad
        if not np.all(np.isfinite(direction)) or float(direction @ grad) >= 0:
            direction = -grad
        slope = float(direction @ grad)

        t = 1.0
        accepted = False
        for _ in range(opts.max_backtracks):
            trial = project(values + t * direction)
            if trial is not None:
                f_trial, grad_trial = phi(trial)
                if f_trial <= f + opts.armijo_c * t * slope:
                    accepted = True
                    break
            t *= opts.backtrack
        if not accepted:
            converged = True  # no descent direction left at line-search resolution
            break
        drop = f - f_trial
        values, f, grad = trial, f_trial, grad_trial
        if drop <= opts.rel_tol * max(abs(f), 1.0):
            stalls += 1
            if stalls >= 3:
                converged = True
                break
        else:
            stalls = 0
    return f, ScalarField(dom, values), iters, converged


def _starts(dom, opts):
    rng = np.random.default_rng(opts.seed)
    a, _ = farthest_pair(dom)
    tent = geodesic_distance(dom, a).dist
    starts = [tent]
    for _ in range(opts.random_starts):
        starts.append(rng.standard_normal(dom.n_nodes))
    return starts


def rayleigh_lambda_p(dom, p, opts=None):
    """Upper bound on the first nontrivial p-Laplacian Neumann eigenvalue."""
    if not p > 1:
        raise ValueError("need p > 1")
    opts = opts or EigenOptions()
    vol = dom.cell_volume

    def denom(values):
        return _log_lp_denominator(values, p, vol)

    best = None
    for u0 in _starts(dom, opts):
        result = _descend_quotient(dom, p, u0, opts, denom)
        if best is None or result[0] < best[0]:
            best = result
    log_value, u, iters, ok = best
    return EigenEstimate(p=float(p), value=math.exp(log_value),
                         root=math.exp(log_value / p), minimizer=u,
                         iterations=iters, converged=ok, log_value=log_value)


def morrey_sigma_p(dom, p, opts=None):
    """Upper bound on the optimal sup-norm (Morrey) constant."""
    if not p > 1:
        raise ValueError("need p > 1")
    opts = opts or EigenOptions()
    m = opts.smoothing if opts.smoothing is not None else min(4.0 * p, 400.0)
    vol = dom.cell_volume

    def denom(values):
        return _log_smooth_max_denominator(values, p, m, vol)

    best = None
    for u0 in _starts(dom, opts):
        result = _descend_quotient(dom, p, u0, opts, denom)
        # rank candidates by the true-sup quotient, not the smoothed one
        log_n, _ = _log_numerator(dom, result[1].values, p)
        top = sup_norm(result[1])
        true_log = log_n - p * math.log(top) if top > 0 else math.inf
        if best is None or true_log < best[0]:
            best = (true_log, result[1], result[2], result[3])
    log_value, u, iters, ok = best
    return EigenEstimate(p=float(p), value=math.exp(log_value),
                         root=math.exp(log_value / p), minimizer=u,
                         iterations=iters, converged=ok, log_value=log_value)


def quotient_of(dom, u, p, kind="lambda"):
    """Re-evaluate a quotient from scratch (self-consistency oracle)."""
    log_n, _ = _log_numerator(dom, u.values, p)
    if kind == "lambda":
        log_d, _ = _log_lp_denominator(u.values, p, dom.cell_volume)
    elif kind == "sigma":
        top = sup_norm(u)
        log_d = p * math.log(top) if top > 0 else -math.inf
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return math.exp(log_n - log_d)
