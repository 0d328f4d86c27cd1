"""Masked uniform grids with a weighted neighbor graph and geodesic metrics.

A domain is a set of active cells of a uniform 1D or 2D lattice.  Nodes sit
at the cell centers, ``coords = origin + index * h``, and carry the cell
volume ``h**dim``.  Two active nodes are joined by an edge whenever they are
stencil neighbors and the straight segment between them stays inside the
active region; the edge weight is the Euclidean distance of the endpoints.
Shortest paths on this graph are the discrete geodesic metric.  The mask is
read as the closed domain: boundary cells are ordinary cells, and two cells
touching only at a corner are considered connected (a path may pass through
the pinch point).

Graph distances overestimate the Euclidean metric of a convex region by at
most a stencil-dependent factor, recorded in ``STENCIL_CONSTANTS``:

* ``axis``      2*dim neighbors, factor sqrt(2) in 2D (1 in 1D),
* ``diagonal``  8 neighbors in 2D, factor 1/cos(pi/8) ~ 1.0824,
* ``knight``    16 neighbors in 2D, factor ~ 1.0276.

The continuum geodesic distance is defined through curves in the open
region; the graph metric lives on the closed one.  The two agree in the
refinement limit for Lipschitz masks, but cells only resolve the boundary to
within h, which is the dominant error source near walls and notches.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import DisconnectedDomain, EmptyDomain

STENCIL_CONSTANTS = {
    "axis": {1: 1.0, 2: math.sqrt(2.0)},
    "diagonal": {1: 1.0, 2: 1.0 / math.cos(math.pi / 8.0)},
    # worst direction mixes (1,0) and (2,1) steps: cos t + (sqrt(5)-2) sin t
    # maximized at tan t = sqrt(5)-2
    "knight": {1: 1.0, 2: math.hypot(1.0, math.sqrt(5.0) - 2.0)},
}

# Canonical stencil offsets (the reversed directions are implied).  Knight
# moves cross the interiors of two intermediate cells, which must be active
# for the edge to be admissible; axis and diagonal moves touch no foreign
# cell interior (a diagonal passes through a single corner point, which the
# closed domain allows).
_OFFSETS_2D = {
    "axis": [(0, 1), (1, 0)],
    "diagonal": [(0, 1), (1, 0), (1, 1), (1, -1)],
    "knight": [(0, 1), (1, 0), (1, 1), (1, -1),
               (1, 2), (2, 1), (1, -2), (2, -1)],
}


def _knight_intermediates(off):
    di, dj = off
    if abs(di) == 2:
        return [(di // 2, 0), (di // 2, dj)]
    if abs(dj) == 2:
        return [(0, dj // 2), (di, dj // 2)]
    return []


class GridDomain:
    """Immutable masked grid with its neighbor graph.

    Attributes
    ----------
    dim : 1 or 2
    shape : per-axis cell counts of the underlying lattice
    h : grid spacing
    origin : coordinates of lattice index 0 (per axis)
    neighborhood : stencil name
    mask : boolean lattice, True = active
    coords : (n_nodes, dim) node coordinates
    edges : (n_edges, 2) node index pairs, each undirected edge stored once
    edge_lengths : (n_edges,) Euclidean lengths
    cell_volume : h**dim
    """

    def __init__(self, mask, h, neighborhood, origin, coords, edges,
                 edge_lengths, node_of):
        self.mask = mask
        self.dim = mask.ndim
        self.shape = mask.shape
        self.h = float(h)
        self.origin = tuple(float(o) for o in origin)
        self.neighborhood = neighborhood
        self.coords = coords
        self.edges = edges
        self.edge_lengths = edge_lengths
        self.cell_volume = self.h ** self.dim
        self._node_of = node_of  # lattice index -> node id, -1 inactive
        for arr in (mask, coords, edges, edge_lengths, node_of):
            arr.setflags(write=False)
        self._csr = None
        self._adjacency = None
        self._diameter = None
        self._diameter_pair = None
        self._axis_steps = None

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    def node_at(self, index):
        """Node id of an active lattice index, -1 otherwise."""
        return int(self._node_of[tuple(np.atleast_1d(index))])

    def nearest_node(self, point):
        """Active node closest to a coordinate point (Euclidean)."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        d2 = ((self.coords - point[None, :]) ** 2).sum(axis=1)
        return int(np.argmin(d2))

    def graph(self):
        """Symmetric CSR adjacency with edge lengths as weights."""
        if self._csr is None:
            a, b = self.edges[:, 0], self.edges[:, 1]
            n = self.n_nodes
            w = self.edge_lengths
            g = sp.coo_matrix(
                (np.concatenate([w, w]),
                 (np.concatenate([a, b]), np.concatenate([b, a]))),
                shape=(n, n),
            )
            self._csr = g.tocsr()
        return self._csr

    def neighbors(self, node):
        """(neighbor ids, distances) of a node, in node-id order."""
        if self._adjacency is None:
            g = self.graph()
            self._adjacency = (g.indptr, g.indices, g.data)
        indptr, indices, data = self._adjacency
        lo, hi = indptr[node], indptr[node + 1]
        return indices[lo:hi], data[lo:hi]

    def axis_steps(self):
        """Per-axis forward/backward neighbor tables for one-sided stencils.

        Returns (fwd, bwd), each of shape (dim, n_nodes) with node ids and
        -1 where the lattice neighbor is missing or inactive.
        """
        if self._axis_steps is None:
            n = self.n_nodes
            fwd = np.full((self.dim, n), -1, dtype=np.int64)
            bwd = np.full((self.dim, n), -1, dtype=np.int64)
            idx = np.argwhere(self.mask)
            for axis in range(self.dim):
                for table, step in ((fwd, 1), (bwd, -1)):
                    nbr = idx.copy()
                    nbr[:, axis] += step
                    ok = (nbr[:, axis] >= 0) & (nbr[:, axis] < self.shape[axis])
                    ids = np.full(n, -1, dtype=np.int64)
                    ids[ok] = self._node_of[tuple(nbr[ok].T)]
                    table[axis] = ids
            self._axis_steps = (fwd, bwd)
        return self._axis_steps


@dataclass(frozen=True)
class GeodesicTable:
    """Single-source shortest-path distances on the domain graph."""

    source: int
    dist: np.ndarray


def build_domain(mask, h, neighborhood="axis", origin=None):
    """Build a GridDomain from a boolean cell mask.

    Raises EmptyDomain for masks with fewer than two active cells and
    DisconnectedDomain when the neighbor graph is not connected.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim not in (1, 2):
        raise ValueError(f"only 1D and 2D masks are supported, got {mask.ndim}D")
    if h <= 0:
        raise ValueError("grid spacing h must be positive")
    if neighborhood not in STENCIL_CONSTANTS:
        raise ValueError(f"unknown neighborhood {neighborhood!r}")
    n_active = int(mask.sum())
    if n_active < 2:
        raise EmptyDomain(f"mask has {n_active} active cells, need at least 2")
    if origin is None:
        origin = (0.0,) * mask.ndim

    node_of = np.full(mask.shape, -1, dtype=np.int64)
    node_of[mask] = np.arange(n_active)
    idx = np.argwhere(mask)
    coords = np.asarray(origin, dtype=float)[None, :] + idx * float(h)

    offsets = [(1,)] if mask.ndim == 1 else _OFFSETS_2D[neighborhood]
    pairs = []
    lengths = []
    for off in offsets:
        nbr = idx + np.asarray(off)
        ok = np.ones(len(idx), dtype=bool)
        for axis in range(mask.ndim):
            ok &= (nbr[:, axis] >= 0) & (nbr[:, axis] < mask.shape[axis])
        sub = nbr[ok]
        active = mask[tuple(sub.T)]
        here = np.flatnonzero(ok)[active]
        there = sub[active]
        if mask.ndim == 2 and max(abs(o) for o in off) == 2:
            keep = np.ones(len(here), dtype=bool)
            for mid in _knight_intermediates(off):
                cell = idx[here] + np.asarray(mid)
                keep &= mask[tuple(cell.T)]
            here, there = here[keep], there[keep]
        if len(here):
            pairs.append(np.stack(
                [node_of[tuple(idx[here].T)], node_of[tuple(there.T)]], axis=1))
            lengths.append(np.full(len(here), float(h) * math.hypot(*off)
                                   if mask.ndim == 2 else float(h) * abs(off[0])))
    if pairs:
        edges = np.concatenate(pairs, axis=0)
        edge_lengths = np.concatenate(lengths)
    else:
        edges = np.empty((0, 2), dtype=np.int64)
        edge_lengths = np.empty(0)

    dom = GridDomain(mask, h, neighborhood, origin, coords, edges,
                     edge_lengths, node_of)
    n_comp, _ = connected_components(dom.graph(), directed=False)
    if n_comp != 1:
        raise DisconnectedDomain(f"active cells form {n_comp} components")
    return dom


def geodesic_distance(dom, source):
    """Shortest-path distances from one node to all nodes."""
    if not 0 <= source < dom.n_nodes:
        raise ValueError(f"source {source} out of range")
    dist = dijkstra(dom.graph(), directed=False, indices=source)
    return GeodesicTable(source=int(source), dist=dist)


def geodesic_diameter(dom, batch=256):
    """Largest shortest-path distance between any two nodes.

    Exact all-pairs sweep, batched to bound memory.  Cached on the domain.
    """
    if dom._diameter is None:
        g = dom.graph()
        best = 0.0
        pair = (0, 0)
        for start in range(0, dom.n_nodes, batch):
            idx = np.arange(start, min(start + batch, dom.n_nodes))
            d = np.atleast_2d(dijkstra(g, directed=False, indices=idx))
            i, j = np.unravel_index(int(np.argmax(d)), d.shape)
            if d[i, j] > best:
                best = float(d[i, j])
                pair = (int(idx[i]), int(j))
        dom._diameter = best
        dom._diameter_pair = pair
    return dom._diameter


def lambda_infinity(dom):
    """First nontrivial Neumann eigenvalue of the infinity Laplacian, 2/diam."""
    return 2.0 / geodesic_diameter(dom)


def farthest_pair(dom):
    """A node pair realizing the geodesic diameter."""
    geodesic_diameter(dom)
    return dom._diameter_pair


# ---------------------------------------------------------------------------
# generators

def interval_domain(a, b, n, style="cells", neighborhood="axis"):
    """1D domain on (a, b) with n nodes.

    style="cells": n cell centers strictly inside (a, b), h = (b-a)/n.
    style="nodes": n nodes spanning [a, b] inclusive, h = (b-a)/(n-1).
    """
    if b <= a:
        raise ValueError("need b > a")
    if style == "cells":
        h = (b - a) / n
    elif style == "nodes":
        h = (b - a) / (n - 1)
    else:
        raise ValueError(f"unknown style {style!r}")
    # anchor at the interval center so that node k and node n-1-k land on
    # exactly opposite floats (a symmetric grid makes odd data sum to zero
    # in floating point, middle node included)
    origin = (0.5 * (a + b) - 0.5 * h * (n - 1),)
    return build_domain(np.ones(n, dtype=bool), h, neighborhood, origin)


def rectangle_domain(nx, ny, h, neighborhood="diagonal", origin=(0.0, 0.0)):
    """Full nx-by-ny grid of nodes with spacing h (node positions origin + i*h)."""
    return build_domain(np.ones((nx, ny), dtype=bool), h, neighborhood, origin)


def unit_square(n=33, neighborhood="diagonal"):
    """n-by-n nodes spanning [0,1]^2 inclusive; corners are nodes."""
    return rectangle_domain(n, n, 1.0 / (n - 1), neighborhood)


def l_shape_domain(n=32, neighborhood="diagonal"):
    """Unit square minus the open upper-right quadrant, n-by-n cells.

    Cell centers at ((i+1/2)/n, (j+1/2)/n); the wall sits exactly on the
    lines x=1/2 and y=1/2, and the reentrant corner is the cell corner at
    (1/2, 1/2).
    """
    if n % 2:
        raise ValueError("n must be even so the notch aligns with cell faces")
    h = 1.0 / n
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    mask = ~(((ii + 0.5) * h > 0.5) & ((jj + 0.5) * h > 0.5))
    return build_domain(mask, h, neighborhood, origin=(0.5 * h, 0.5 * h))


# ---------------------------------------------------------------------------
# file formats

def parse_mask_text(text):
    """Parse a '#'/'.' grid, row-major; one line per row, 1D = single line."""
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise ValueError("empty mask text")
    width = len(rows[0])
    for line in rows:
        if len(line) != width:
            raise ValueError("ragged mask rows")
        if any(c not in "#." for c in line):
            raise ValueError("mask characters must be '#' or '.'")
    grid = np.array([[c == "#" for c in line] for line in rows], dtype=bool)
    return grid[0] if grid.shape[0] == 1 else grid


def load_mask_text(path):
    return parse_mask_text(Path(path).read_text())


def mask_to_text(mask):
    mask = np.atleast_2d(np.asarray(mask, dtype=bool))
    return "\n".join("".join("#" if v else "." for v in row) for row in mask)


def domain_from_descriptor(desc, base_dir=None):
    """Build a domain from a JSON-style descriptor.

    Two forms are accepted: the explicit one,
        {"dim": 2, "shape": [nx, ny], "h": 0.1, "stencil": "diagonal",
         "mask_file": "mask.txt", "origin": [0, 0]}
    (omit mask_file for a full grid), and generator shorthands,
        {"kind": "interval", "a": -1, "b": 1, "n": 401, "style": "cells"}
        {"kind": "square", "n": 33}
        {"kind": "rectangle", "nx": 61, "ny": 11, "h": 0.05}
        {"kind": "l_shape", "n": 32}
    all with an optional "stencil".
    """
    if isinstance(desc, (str, Path)):
        path = Path(desc)
        base_dir = path.parent
        desc = json.loads(path.read_text())
    stencil = desc.get("stencil", desc.get("neighborhood"))
    kind = desc.get("kind")
    if kind == "interval":
        return interval_domain(desc["a"], desc["b"], desc["n"],
                               style=desc.get("style", "cells"),
                               neighborhood=stencil or "axis")
    if kind == "square":
        return unit_square(desc.get("n", 33), neighborhood=stencil or "diagonal")
    if kind == "rectangle":
        return rectangle_domain(desc["nx"], desc["ny"], desc["h"],
                                neighborhood=stencil or "diagonal",
                                origin=tuple(desc.get("origin", (0.0, 0.0))))
    if kind == "l_shape":
        return l_shape_domain(desc.get("n", 32), neighborhood=stencil or "diagonal")
    if kind is not None:
        raise ValueError(f"unknown domain kind {kind!r}")

    h = desc["h"]
    if "mask_file" in desc and desc["mask_file"]:
        mask_path = Path(desc["mask_file"])
        if base_dir is not None and not mask_path.is_absolute():
            mask_path = Path(base_dir) / mask_path
        mask = load_mask_text(mask_path)
    else:
        mask = np.ones(tuple(desc["shape"]), dtype=bool)
    if "shape" in desc and tuple(mask.shape) != tuple(desc["shape"]):
        raise ValueError("mask shape disagrees with descriptor shape")
    origin = tuple(desc.get("origin", (0.0,) * mask.ndim))
    return build_domain(mask, h, stencil or "axis", origin)
