"""Discrete signed measures on grid domains.

A measure assigns a real mass to every node (the mass of the cell it
represents); Dirac data and sampled densities get the same treatment.
Construction helpers cover densities, centered label data for graph-based
label propagation, and mollification with compactly supported kernels.
Mollification spreads each unit of node mass over the Euclidean
eps-neighborhood with kernel weights renormalized to sum to one over the
active nodes, so total mass is conserved exactly even where part of the
kernel support falls outside the domain.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import EpsilonTooSmall, TooFewLabels


def _triangle(r):
    return np.maximum(0.0, 1.0 - r)


def _quartic(r):
    # Wendland-type C^2 bump: (1-r)^4 (4r+1) on [0, 1]
    w = np.maximum(0.0, 1.0 - r)
    return w ** 4 * (4.0 * r + 1.0)


KERNELS = {"triangle": _triangle, "quartic": _quartic}


class SignedMeasure:
    """Per-node signed masses on a grid domain."""

    def __init__(self, domain, weights):
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (domain.n_nodes,):
            raise ValueError(
                f"weights shape {weights.shape} does not match "
                f"{domain.n_nodes} nodes")
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        self.domain = domain
        self.weights = weights
        self.weights.setflags(write=False)

    @property
    def total_mass(self):
        return math.fsum(self.weights)

    @property
    def total_variation(self):
        return math.fsum(np.abs(self.weights))

    def density(self):
        """Mass per unit volume at each node."""
        return self.weights / self.domain.cell_volume

    def __neg__(self):
        return SignedMeasure(self.domain, -self.weights)

    def scaled(self, factor):
        return SignedMeasure(self.domain, factor * self.weights)


def jordan_decompose(mu):
    """Nodewise positive and negative parts; mu = plus - minus exactly."""
    w = mu.weights
    return (SignedMeasure(mu.domain, np.maximum(w, 0.0)),
            SignedMeasure(mu.domain, np.maximum(-w, 0.0)))


def check_compatibility(mu, tol=1e-12):
    """Relative zero-total-mass test: |sum w| <= tol * sum |w|."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return abs(mu.total_mass) <= tol * mu.total_variation


def from_density(dom, f):
    """Measure with node masses f(node) * cell_volume.

    f may be a callable taking the (n_nodes, dim) coordinate array, or an
    array of per-node density values.
    """
    vals = f(dom.coords) if callable(f) else np.asarray(f, dtype=float)
    vals = np.broadcast_to(np.asarray(vals, dtype=float), (dom.n_nodes,))
    return SignedMeasure(dom, vals * dom.cell_volume)


def dirac(dom, node, mass=1.0):
    w = np.zeros(dom.n_nodes)
    w[node] = mass
    return SignedMeasure(dom, w)


def dirac_pair(dom, node_plus, node_minus, mass=1.0):
    w = np.zeros(dom.n_nodes)
    w[node_plus] += mass
    w[node_minus] -= mass
    return SignedMeasure(dom, w)


def mollify(mu, eps, kernel="triangle"):
    """Spread node masses over Euclidean eps-balls with a radial kernel.

    The kernel profile lives on [0, 1] and is scaled to radius eps.  For
    each source node the stencil weights over active nodes are normalized
    to unit sum, so the output has the same total mass to rounding and its
    support dilates the input support by less than eps.
    """
    if eps < mu.domain.h:
        raise EpsilonTooSmall(f"eps={eps} below grid spacing h={mu.domain.h}")
    profile = KERNELS[kernel] if isinstance(kernel, str) else kernel
    coords = mu.domain.coords
    out = np.zeros(mu.domain.n_nodes)
    for src in np.flatnonzero(mu.weights):
        r = np.linalg.norm(coords - coords[src][None, :], axis=1) / eps
        k = np.where(r < 1.0, profile(np.minimum(r, 1.0)), 0.0)
        total = k.sum()
        if total <= 0:  # kernel vanishing away from 0 cannot reach here: r=0 included
            raise AssertionError("kernel stencil summed to zero")
        out += mu.weights[src] * (k / total)
    return SignedMeasure(mu.domain, out)


def poisson_learning_measure(dom, labeled):
    """Centered Dirac label data: mass g_i - mean(g) at each labeled node.

    ``labeled`` is a sequence of (node, value) pairs; repeated nodes
    accumulate.  The centering makes the total mass vanish.
    """
    labeled = list(labeled)
    if len(labeled) < 2:
        raise TooFewLabels(f"got {len(labeled)} labels, need at least 2")
    nodes = np.array([n for n, _ in labeled], dtype=int)
    g = np.array([v for _, v in labeled], dtype=float)
    d = g - math.fsum(g) / len(g)
    d -= math.fsum(d) / len(d)  # second pass clears rounding in the mean
    w = np.zeros(dom.n_nodes)
    np.add.at(w, nodes, d)
    return SignedMeasure(dom, w)


def gaussian_blob_density(dom, blobs):
    """Sum of Gaussian bumps given as dicts {center, sigma, mass}.

    Each bump integrates to ~mass (normalized on the grid, not in the
    continuum, so the masses are exact).
    """
    vals = np.zeros(dom.n_nodes)
    for blob in blobs:
        c = np.atleast_1d(np.asarray(blob["center"], dtype=float))
        sigma = float(blob.get("sigma", 2 * dom.h))
        mass = float(blob.get("mass", 1.0))
        d2 = ((dom.coords - c[None, :]) ** 2).sum(axis=1)
        bump = np.exp(-0.5 * d2 / sigma ** 2)
        vals += mass * bump / (bump.sum() * dom.cell_volume)
    return SignedMeasure(dom, vals * dom.cell_volume)


def sign_density(axis=0):
    """Density sign(x_axis), the classic antisymmetric right-hand side."""
    def f(coords):
        return np.sign(coords[:, axis])
    return f


# ---------------------------------------------------------------------------
# file formats

def save_measure_csv(mu, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node_index", "weight"])
        for i, w in enumerate(mu.weights):
            writer.writerow([i, repr(float(w))])


def load_measure_csv(dom, path):
    w = np.zeros(dom.n_nodes)
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip() == "node_index":
                continue
            w[int(row[0])] += float(row[1])
    return SignedMeasure(dom, w)


def measure_from_descriptor(dom, desc, base_dir=None):
    """Build a measure from a JSON-style descriptor.

    Forms:
        {"type": "dirac", "entries": [[node, weight], ...]}
        {"type": "dirac", "points": [[x, y, weight], ...]}   (nearest node)
        {"type": "density", "entries": [[node, value], ...]}
        {"type": "sign_density", "axis": 0}
        {"type": "gaussian_blobs", "blobs": [{"center": [...], "sigma": s,
                                              "mass": m}, ...]}
        {"type": "labels", "entries": [[node, g], ...]}
        {"type": "csv", "path": "m.csv"}
    plus an optional {"mollify": {"eps": ..., "kernel": "triangle"}} applied
    to the result.
    """
    if isinstance(desc, (str, Path)):
        path = Path(desc)
        base_dir = path.parent
        if path.suffix.lower() == ".csv":
            return load_measure_csv(dom, path)
        desc = json.loads(path.read_text())
    kind = desc["type"]
    if kind == "dirac":
        w = np.zeros(dom.n_nodes)
        for entry in desc.get("entries", []):
            w[int(entry[0])] += float(entry[1])
        for entry in desc.get("points", []):
            w[dom.nearest_node(entry[:-1])] += float(entry[-1])
        mu = SignedMeasure(dom, w)
    elif kind == "density":
        vals = np.zeros(dom.n_nodes)
        for node, value in desc["entries"]:
            vals[int(node)] = float(value)
        mu = from_density(dom, vals)
    elif kind == "sign_density":
        mu = from_density(dom, sign_density(desc.get("axis", 0)))
    elif kind == "gaussian_blobs":
        mu = gaussian_blob_density(dom, desc["blobs"])
    elif kind == "labels":
        mu = poisson_learning_measure(
            dom, [(int(n), float(g)) for n, g in desc["entries"]])
    elif kind == "csv":
        path = Path(desc["path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        mu = load_measure_csv(dom, path)
    else:
        raise ValueError(f"unknown measure type {kind!r}")
    if "mollify" in desc:
        spec = desc["mollify"]
        mu = mollify(mu, float(spec["eps"]), spec.get("kernel", "triangle"))
    return mu
