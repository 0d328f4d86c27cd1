"""Variational solver for the Neumann p-Poisson problem on grid domains.

The discrete problem is

    minimize  J_p(u) = (1/p) sum |grad u|^p vol - sum u * w
    subject to  sum |u - c|^(p-2) (u - c) vol = 0,

where w are the node masses of a zero-total-mass measure.  Because the
masses balance, J_p is invariant under constant shifts, so the constraint
is a free normalization: every iterate is re-centered by the unique root of
the strictly decreasing generalized-mean map (bisection).

The solve itself is projected descent with a backtracking Armijo line
search.  The default descent direction is preconditioned by the current
weighted-graph-Laplacian metric (the Hessian of the energy, regularized),
which keeps the iteration count flat as the grid is refined; plain and
diagonally preconditioned gradient directions remain available as methods
"gradient" and "diagonal" for cross-checks.  Exponents below 2 use a
floored Hessian weight (the energy is C^1 but not C^2 there).

Dirac right-hand sides are admitted directly: the discrete setting needs no
regularity, although the continuum theory behind the large-p limit assumes
exponents above the dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .calculus import (ScalarField, gradient_field, gradient_norms,
                       lipschitz_constant, log_p_gradient_sum,
                       p_dirichlet_energy, sup_norm)
from .domain import geodesic_diameter
from .errors import NotBalanced
from .measures import check_compatibility

_POW_CLIP = 250.0  # cap on exponent*log terms; softens far-from-optimum blowups


@dataclass
class SolveOptions:
    """Stopping rules and step control for the variational solve."""

    max_iters: int = 500
    grad_tol: float | None = None  # default 1e-8 * total variation of the data
    normalization_tol: float = 1e-12
    warm_start: ScalarField | None = None
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    method: str = "newton"  # "newton" | "diagonal" | "gradient"
    balance_tol: float = 1e-9
    hess_floor: float = 1e-8  # relative gradient floor in the metric for p < 2

    def __post_init__(self):
        if self.grad_tol is not None and self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if self.normalization_tol <= 0:
            raise ValueError("normalization_tol must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must be in (0, 1)")


@dataclass
class SolveReport:
    """Converged field plus diagnostics of one p-Poisson solve."""

    u: ScalarField
    p: float
    energy: float  # objective J_p at the final iterate
    dirichlet_energy: float
    weak_residual: float
    normalization_residual: float
    iterations: int
    converged: bool
    energy_bound_ratio: float
    sup_norm: float
    lip_const: float
    pairing: float
    grad_tol: float
    energy_history: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "p": self.p,
            "energy": self.energy,
            "dirichlet_energy": self.dirichlet_energy,
            "weak_residual": self.weak_residual,
            "normalization_residual": self.normalization_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "energy_bound_ratio": self.energy_bound_ratio,
            "sup_norm": self.sup_norm,
            "lip_const": self.lip_const,
            "pairing": self.pairing,
            "grad_tol": self.grad_tol,
        }


# ---------------------------------------------------------------------------
# normalization

def _gen_mean_residual(values, p, vol):
    """Scaled residual of the generalized-mean condition at c = 0.

    Returns sum sign(u) |u/M|^(p-1) vol with M = max|u|; the rescaling keeps
    the powers representable for any p and preserves the sign and the root.
    """
    m = float(np.max(np.abs(values))) if values.size else 0.0
    if m == 0.0:
        return 0.0
    r = values / m
    with np.errstate(divide="ignore"):
        mag = np.where(r != 0.0,
                       np.exp((p - 1.0) * np.log(np.abs(r) + (r == 0.0))), 0.0)
    return float(np.sum(np.sign(r) * mag) * vol)


def normalize_generalized_mean(u, p, tol=1e-12):
    """Shift u by the root c of sum |u-c|^(p-2)(u-c) vol = 0.

    The map is strictly decreasing in c, so the root is unique and always
    bracketed by [min u, max u]; p = 2 reduces to subtracting the mean.
    """
    if not p > 1:
        raise ValueError("need p > 1")
    vals = u.values
    vol = u.domain.cell_volume
    if p == 2:
        c = math.fsum(vals) / len(vals)
        return u.shifted(c)
    lo, hi = float(np.min(vals)), float(np.max(vals))
    if hi - lo == 0.0:
        return u.shifted(lo)
    for _ in range(200):
        c = 0.5 * (lo + hi)
        r = _gen_mean_residual(vals - c, p, vol)
        if abs(r) <= 0.25 * tol or hi - lo <= 4e-16 * max(abs(lo), abs(hi), 1.0):
            break
        if r > 0.0:
            lo = c
        else:
            hi = c
    return u.shifted(c)


def normalization_residual(u, p):
    """Scaled generalized-mean residual of a field as it stands."""
    return _gen_mean_residual(u.values, p, u.domain.cell_volume)


# ---------------------------------------------------------------------------
# energy gradient and metric

def _grad_ops(dom):
    """Per-axis one-sided difference operators as sparse matrices."""
    ops = getattr(dom, "_grad_ops_cache", None)
    if ops is None:
        fwd, bwd = dom.axis_steps()
        n = dom.n_nodes
        ops = []
        for axis in range(dom.dim):
            f, b = fwd[axis], bwd[axis]
            rows, cols, data = [], [], []
            for i in range(n):
                if f[i] >= 0:
                    rows += [i, i]
                    cols += [f[i], i]
                    data += [1.0 / dom.h, -1.0 / dom.h]
                elif b[i] >= 0:
                    rows += [i, i]
                    cols += [i, b[i]]
                    data += [1.0 / dom.h, -1.0 / dom.h]
            ops.append(sp.csr_matrix((data, (rows, cols)), shape=(n, n)))
        dom._grad_ops_cache = ops
    return ops


def _power_weights(s, q):
    """s**q with 0 where s == 0, exponent clipped to avoid overflow."""
    if q == 0.0:
        return np.ones_like(s)
    out = np.zeros_like(s)
    pos = s > 0.0
    out[pos] = np.exp(np.minimum(q * np.log(s[pos]), _POW_CLIP))
    return out


def _objective_gradient(dom, weights, p, values):
    """(grad J, gradient field, norms) at the given node values."""
    g = gradient_field(ScalarField(dom, values))
    s = np.linalg.norm(g, axis=1)
    coef = _power_weights(s, p - 2.0)
    ops = _grad_ops(dom)
    grad = -weights.copy()
    for axis in range(dom.dim):
        grad += dom.cell_volume * (ops[axis].T @ (coef * g[:, axis]))
    return grad, g, s


def _metric_matrix(dom, p, g, s, floor):
    """Current-iterate energy metric sum G_a^T D_ab G_b (without volume)."""
    s_eff = np.maximum(s, floor) if p < 2 else s
    coef = _power_weights(s_eff, p - 2.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ghat = np.where(s_eff[:, None] > 0, g / np.maximum(s_eff, 1e-300)[:, None], 0.0)
    ops = _grad_ops(dom)
    blocks = None
    for a in range(dom.dim):
        for b in range(dom.dim):
            d = coef * ((1.0 if a == b else 0.0) + (p - 2.0) * ghat[:, a] * ghat[:, b])
            term = ops[a].T @ sp.diags(d) @ ops[b]
            blocks = term if blocks is None else blocks + term
    return blocks


def weak_form_residual(u, mu, p):
    """Max nodal imbalance of the discrete weak form.

    Equals the sup norm of the objective gradient: the energy flux tested
    against each nodal basis function minus the node mass.
    """
    grad, _, _ = _objective_gradient(u.domain, mu.weights, p, u.values)
    return float(np.max(np.abs(grad)))


# ---------------------------------------------------------------------------
# solve

def solve_p_poisson(dom, mu, p, opts=None):
    """Minimize the p-Dirichlet objective for balanced data.

    Raises NotBalanced when the measure carries net mass (the objective is
    unbounded below).  Hitting max_iters returns the partial result with
    converged=False.
    """
    opts = opts or SolveOptions()
    if not p > 1:
        raise ValueError("need p > 1")
    if not check_compatibility(mu, opts.balance_tol):
        raise NotBalanced(
            f"total mass {mu.total_mass:.3e} exceeds {opts.balance_tol} "
            "of the total variation")
    w = mu.weights
    tv = mu.total_variation
    grad_tol = opts.grad_tol if opts.grad_tol is not None else 1e-8 * max(tv, 1e-300)

    if opts.warm_start is not None:
        u = ScalarField(dom, opts.warm_start.values.copy())
    else:
        u = ScalarField.zeros(dom)
    u = normalize_generalized_mean(u, p, opts.normalization_tol)

    def objective(values, norms=None):
        e = p_dirichlet_energy(ScalarField(dom, values), p, norms=norms)
        return e - float(values @ w)

    grad, g, s = _objective_gradient(dom, w, p, u.values)
    J = objective(u.values, norms=s)
    history = [J]
    res = float(np.max(np.abs(grad)))
    iters = 0
    step0 = 1.0
    converged = res <= grad_tol

    while not converged and iters < opts.max_iters:
        iters += 1
        direction = None
        if opts.method == "newton":
            floor = opts.hess_floor * max(float(np.max(s)), 1.0)
            H = dom.cell_volume * _metric_matrix(dom, p, g, s, floor)
            diag_max = float(np.max(H.diagonal())) if H.nnz else 0.0
            reg = max(1e-12 * diag_max, 1e-30)
            try:
                cand = spsolve((H + reg * sp.identity(dom.n_nodes)).tocsc(), -grad)
                if np.all(np.isfinite(cand)) and float(cand @ grad) < 0:
                    direction = cand
            except RuntimeError:
                direction = None
        elif opts.method == "diagonal":
            floor = opts.hess_floor * max(float(np.max(s)), 1.0)
            H = dom.cell_volume * _metric_matrix(dom, p, g, s, floor)
            d = np.asarray(H.diagonal())
            d = np.where(d > 0, d, max(float(np.max(d)), 1.0))
            direction = -grad / d
        if direction is None:
            direction = -grad

        slope = float(direction @ grad)
        t = 1.0 if opts.method != "gradient" else step0
        accepted = False
        for _ in range(opts.max_backtracks):
            trial = u.values + t * direction
            J_trial = objective(trial)
            if math.isfinite(J_trial) and J_trial <= J + opts.armijo_c * t * slope:
                accepted = True
                break
            t *= opts.backtrack
        if not accepted:
            break  # no descent at line-search resolution; report as-is
        if opts.method == "gradient":
            step0 = min(t * 2.0, 1e6)

        u = normalize_generalized_mean(ScalarField(dom, trial), p,
                                       opts.normalization_tol)
        grad, g, s = _objective_gradient(dom, w, p, u.values)
        J = objective(u.values, norms=s)
        history.append(J)
        res = float(np.max(np.abs(grad)))
        converged = res <= grad_tol

    dirichlet = p_dirichlet_energy(u, p, norms=s)
    diam = geodesic_diameter(dom)
    log_sum = log_p_gradient_sum(u, p, norms=s)
    denom = 0.5 * diam * tv
    if denom > 0 and math.isfinite(log_sum):
        ratio = math.exp((1.0 - 1.0 / p) * log_sum) / denom
    else:
        ratio = 0.0
    return SolveReport(
        u=u,
        p=float(p),
        energy=J,
        dirichlet_energy=dirichlet,
        weak_residual=res,
        normalization_residual=normalization_residual(u, p),
        iterations=iters,
        converged=converged,
        energy_bound_ratio=ratio,
        sup_norm=sup_norm(u),
        lip_const=lipschitz_constant(u),
        pairing=float(math.fsum(u.values * w)),
        grad_tol=grad_tol,
        energy_history=history,
    )


def continuation_sweep(dom, mu, p_list, opts=None):
    """Solve for each p in ascending order, warm-starting from the last.

    ``mu`` is a measure or a callable p -> measure (a p-indexed family).
    Aborts on the first NotBalanced instance.
    """
    p_list = list(p_list)
    if any(not p > 1 for p in p_list):
        raise ValueError("all exponents must exceed 1")
    if any(b <= a for a, b in zip(p_list, p_list[1:])):
        raise ValueError("p_list must be strictly ascending")
    opts = opts or SolveOptions()
    reports = []
    warm = opts.warm_start
    for p in p_list:
        mu_p = mu(p) if callable(mu) else mu
        reports.append(solve_p_poisson(dom, mu_p, p, replace(opts, warm_start=warm)))
        warm = reports[-1].u
    return reports


def analytic_1d_solution(x, p):
    """Closed-form solution for the sign right-hand side on (-1, 1).

    u_p(x) = ((p-1)/p) sign(x) [1 - (1-|x|)^(p/(p-1))]; odd, vanishing at 0,
    and approaching the identity uniformly as p grows.
    """
    if not p > 1:
        raise ValueError("need p > 1")
    x = np.asarray(x, dtype=float)
    base = np.clip(1.0 - np.abs(x), 0.0, None)
    return (p - 1.0) / p * np.sign(x) * (1.0 - base ** (p / (p - 1.0)))
