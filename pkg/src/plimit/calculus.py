"""Scalar fields on grid domains: gradients, norms, and degenerate operators.

Node gradients use forward differences per axis, falling back to the
backward quotient where the forward lattice neighbor is missing (one-sided
inward at masked boundaries).  One-sided differences keep the p-Dirichlet
energy convex in the node values at the price of O(h) consistency.

The discrete infinity Laplacian is the normalized monotone two-point scheme

    L_inf u(x) = 2 * (s_max + s_min) / (d_max + d_min),

where s_max / s_min are the largest and smallest difference quotients to
the stencil neighbors and d_max / d_min the corresponding distances.  It is
consistent with (grad u . D2u grad u) / |grad u|^2 up to O(h), vanishes on
affine fields exactly, and its scale is h-independent away from kinks.
Sign convention: u(x) = x^2 gives +2 at interior nodes; a downward cone
peak gives -2/h, an upward cone valley +2/h.

Energies for exponents beyond 64 are evaluated through logarithms of the
gradient magnitudes (rescale before power) so that p in the hundreds does
not overflow; truly unrepresentable energies come back as +inf, which the
solvers treat as a rejected step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGradient, InsufficientStencil

LOG_ENERGY_P = 64.0  # beyond this, powers go through the log-domain path


class ScalarField:
    """Per-node real values on a grid domain."""

    def __init__(self, domain, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (domain.n_nodes,):
            raise ValueError(
                f"values shape {values.shape} does not match "
                f"{domain.n_nodes} nodes")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.domain = domain
        self.values = values

    @classmethod
    def from_function(cls, domain, f):
        return cls(domain, np.asarray(f(domain.coords), dtype=float))

    @classmethod
    def zeros(cls, domain):
        return cls(domain, np.zeros(domain.n_nodes))

    def copy(self):
        return ScalarField(self.domain, self.values.copy())

    def shifted(self, c):
        return ScalarField(self.domain, self.values - c)


@dataclass(frozen=True)
class EdgeGradient:
    """Oriented per-edge slopes (u[b] - u[a]) / length, aligned with dom.edges."""

    slopes: np.ndarray


def edge_gradient(u):
    dom = u.domain
    a, b = dom.edges[:, 0], dom.edges[:, 1]
    return EdgeGradient((u.values[b] - u.values[a]) / dom.edge_lengths)


def gradient_field(u):
    """One-sided difference gradient, shape (n_nodes, dim)."""
    dom = u.domain
    fwd, bwd = dom.axis_steps()
    vals = u.values
    g = np.zeros((dom.n_nodes, dom.dim))
    for axis in range(dom.dim):
        f, b = fwd[axis], bwd[axis]
        has_f = f >= 0
        use_b = ~has_f & (b >= 0)
        g[has_f, axis] = (vals[f[has_f]] - vals[has_f]) / dom.h
        g[use_b, axis] = (vals[use_b] - vals[b[use_b]]) / dom.h
    return g


def node_gradient(u, node):
    """Per-axis difference quotient vector at one node."""
    return gradient_field(u)[node]


def gradient_norms(u):
    return np.linalg.norm(gradient_field(u), axis=1)


def p_dirichlet_energy(u, p, norms=None):
    """(1/p) * sum |grad u|^p * cell_volume.

    Exponents above LOG_ENERGY_P (and direct evaluations that overflow) go
    through the rescale-before-power path; +inf is returned only when the
    energy genuinely exceeds the floating range.
    """
    if not p > 1:
        raise ValueError("need p > 1")
    s = gradient_norms(u) if norms is None else norms
    vol = u.domain.cell_volume
    if p <= LOG_ENERGY_P:
        with np.errstate(over="ignore"):
            total = float(np.sum(s ** p)) * vol
        if math.isfinite(total):
            return total / p
    pos = s[s > 0]
    if pos.size == 0:
        return 0.0
    logs = p * np.log(pos) + math.log(vol)
    m = float(np.max(logs))
    lse = m + math.log(float(np.sum(np.exp(logs - m))))
    try:
        return math.exp(lse) / p
    except OverflowError:
        return math.inf


def log_p_gradient_sum(u, p, norms=None):
    """log( sum |grad u|^p * cell_volume ), -inf for a constant field."""
    s = gradient_norms(u) if norms is None else norms
    pos = s[s > 0]
    if pos.size == 0:
        return -math.inf
    logs = p * np.log(pos) + math.log(u.domain.cell_volume)
    m = float(np.max(logs))
    return m + math.log(float(np.sum(np.exp(logs - m))))


def lipschitz_constant(u):
    """Largest absolute edge slope; the graph-metric Lipschitz constant."""
    return float(np.max(np.abs(edge_gradient(u).slopes)))


def lm_norm(u, m):
    """(sum |u|^m * cell_volume)^(1/m), evaluated stably for large m."""
    if m < 1:
        raise ValueError("need m >= 1")
    vals = np.abs(u.values)
    top = float(np.max(vals)) if vals.size else 0.0
    if top == 0.0:
        return 0.0
    scaled = float(np.sum((vals / top) ** m)) * u.domain.cell_volume
    return top * scaled ** (1.0 / m)


def sup_norm(u):
    return float(np.max(np.abs(u.values)))


def infinity_laplacian(u, node):
    """Normalized two-point infinity Laplacian at one node."""
    nbrs, dists = u.domain.neighbors(node)
    if len(nbrs) < 2:
        raise InsufficientStencil(f"node {node} has {len(nbrs)} neighbors")
    slopes = (u.values[nbrs] - u.values[node]) / dists
    hi, lo = int(np.argmax(slopes)), int(np.argmin(slopes))
    return 2.0 * (slopes[hi] + slopes[lo]) / (dists[hi] + dists[lo])


def infinity_laplacian_field(u):
    """Vectorized operator over all nodes.

    Returns (values, valid) where valid is False at nodes with fewer than
    two neighbors (the scheme needs an ascent and a descent direction).
    """
    dom = u.domain
    n = dom.n_nodes
    out = np.zeros(n)
    valid = np.ones(n, dtype=bool)
    for node in range(n):
        nbrs, dists = dom.neighbors(node)
        if len(nbrs) < 2:
            valid[node] = False
            continue
        slopes = (u.values[nbrs] - u.values[node]) / dists
        hi, lo = int(np.argmax(slopes)), int(np.argmin(slopes))
        out[node] = 2.0 * (slopes[hi] + slopes[lo]) / (dists[hi] + dists[lo])
    return out, valid


def p_laplacian_pointwise(gradient, hessian, x, p):
    """Exact p-Laplacian of a smooth test field from supplied derivatives.

    Evaluates |g|^(p-2) * (tr H + (p-2) <g, H g> / |g|^2) with g, H the
    analytic gradient and Hessian at x.  Used as an oracle against discrete
    residuals; raises DegenerateGradient at critical points when p < 2.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = np.atleast_1d(np.asarray(gradient(x), dtype=float))
    H = np.atleast_2d(np.asarray(hessian(x), dtype=float))
    gn = float(np.linalg.norm(g))
    lap = float(np.trace(H))
    if gn == 0.0:
        if p < 2:
            raise DegenerateGradient("zero gradient with p < 2")
        if p == 2:
            return lap
        return 0.0
    inf_lap = float(g @ H @ g)
    return gn ** (p - 2.0) * (lap + (p - 2.0) * inf_lap / gn ** 2)


# ---------------------------------------------------------------------------
# file formats

def save_field_csv(u, path):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_index", "value"])
        for i, v in enumerate(u.values):
            writer.writerow([i, repr(float(v))])


def load_field_csv(dom, path):
    import csv

    vals = np.zeros(dom.n_nodes)
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip() == "node_index":
                continue
            vals[int(row[0])] = float(row[1])
    return ScalarField(dom, vals)
