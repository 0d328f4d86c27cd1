"""Region classification and discrete residuals of the limiting PDE.

The large-p limit of the balanced Neumann problem satisfies, in the
viscosity sense,

    min(|grad u| - 1, -L_inf u) = 0   where the data is positive,
    -L_inf u = 0                      away from the closed data support,
    max(1 - |grad u|, -L_inf u) = 0   where the data is negative,
    max u + min u = 0,

and, split further, solves the eikonal equation |grad u| = 1 with
infinity-superharmonicity on the positive region and the reversed signs on
the negative one.  These statements only constrain smooth points, so the
discrete surrogates below evaluate monotone-scheme residuals at nodes and
exclude kink nodes, detected by a normalized operator magnitude above
0.5/h (a cone vertex scores 2/h, smooth fields O(1)).  Nodes with fewer
than two neighbors cannot carry the two-point operator and are excluded
and counted separately.  Nodes on the discrete boundary of the data
support stay unclassified: the limiting equation does not constrain them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .calculus import (ScalarField, gradient_norms, infinity_laplacian_field)
from .errors import DomainError
from .measures import SignedMeasure

POSITIVE, NEGATIVE, FAR_ZERO, UNCLASSIFIED = 1, -1, 0, 2

KINK_FACTOR = 0.5  # nodes with |L_inf u| > KINK_FACTOR / h are kink-flagged


@dataclass
class RegionLabels:
    """Per-node region labels with the thresholds that produced them."""

    labels: np.ndarray  # values in {POSITIVE, NEGATIVE, FAR_ZERO, UNCLASSIFIED}
    threshold: float
    dilation_radius: float

    @property
    def positive(self):
        return self.labels == POSITIVE

    @property
    def negative(self):
        return self.labels == NEGATIVE

    @property
    def far_zero(self):
        return self.labels == FAR_ZERO

    @property
    def unclassified(self):
        return self.labels == UNCLASSIFIED

    def counts(self):
        return {"positive": int(self.positive.sum()),
                "negative": int(self.negative.sum()),
                "far_zero": int(self.far_zero.sum()),
                "unclassified": int(self.unclassified.sum())}


def classify_regions(data, threshold=None, dilation_radius=None):
    """Split nodes by the sign of the data density.

    ``data`` is a SignedMeasure (converted to a density) or a ScalarField
    of density values.  Positive/Negative hold nodes with density beyond
    +-threshold; FarZero holds nodes whose graph ball of the dilation
    radius contains no above-threshold node (the discrete complement of
    the closed support); the remaining shell is unclassified.

    Defaults: threshold = 1e-10 * max |density|, dilation_radius = 2h.
    """
    if isinstance(data, SignedMeasure):
        dom, density = data.domain, data.density()
    else:
        dom, density = data.domain, data.values
    if threshold is None:
        threshold = 1e-10 * float(np.max(np.abs(density)))
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    if dilation_radius is None:
        dilation_radius = 2.0 * dom.h

    labels = np.full(dom.n_nodes, UNCLASSIFIED, dtype=np.int8)
    labels[density > threshold] = POSITIVE
    labels[density < -threshold] = NEGATIVE
    support = np.abs(density) > threshold
    if support.any():
        dist = dijkstra(dom.graph(), directed=False,
                        indices=np.flatnonzero(support), min_only=True,
                        limit=dilation_radius * (1 + 1e-12))
        far = (dist > dilation_radius) & (labels == UNCLASSIFIED)
    else:
        far = labels == UNCLASSIFIED
    labels[far] = FAR_ZERO
    return RegionLabels(labels=labels, threshold=float(threshold),
                        dilation_radius=float(dilation_radius))


def interior_mask(dom):
    """Nodes with both lattice neighbors along every axis.

    The limiting equation constrains interior points only, and the
    one-sided stencils are inconsistent where a neighbor is missing, so
    residual norms are taken over these nodes.
    """
    fwd, bwd = dom.axis_steps()
    return np.all((fwd >= 0) & (bwd >= 0), axis=0)


def _operator_fields(u):
    """Gradient magnitude, normalized infinity Laplacian, and exclusions."""
    gradmag = gradient_norms(u)
    inf_lap, valid = infinity_laplacian_field(u)
    kink = valid & (np.abs(inf_lap) > KINK_FACTOR / u.domain.h)
    excluded = ~valid | kink | ~interior_mask(u.domain)
    return gradmag, inf_lap, valid, kink, excluded


def _region_norm(values, region, excluded):
    take = region & ~excluded
    return float(np.max(np.abs(values[take]))) if take.any() else 0.0


@dataclass
class ResidualReport:
    """Per-region residuals of the limiting equation, kinks excluded.

    Residual fields are nan off their region; norms are maxima of absolute
    values over the region's non-excluded nodes.
    """

    r_plus: np.ndarray
    r_zero: np.ndarray
    r_minus: np.ndarray
    norm_plus: float
    norm_zero: float
    norm_minus: float
    mean_value_residual: float
    kink_mask: np.ndarray
    stencil_invalid_mask: np.ndarray

    def norms(self):
        return {"positive": self.norm_plus, "far_zero": self.norm_zero,
                "negative": self.norm_minus,
                "mean_value": self.mean_value_residual}


def pde_residuals(u, labels):
    """Residuals of min/max form of the limiting equation on each region."""
    gradmag, inf_lap, valid, kink, excluded = _operator_fields(u)
    n = u.domain.n_nodes
    r_plus = np.full(n, np.nan)
    r_zero = np.full(n, np.nan)
    r_minus = np.full(n, np.nan)
    pos, neg, far = labels.positive, labels.negative, labels.far_zero
    r_plus[pos] = np.minimum(gradmag[pos] - 1.0, -inf_lap[pos])
    r_zero[far] = -inf_lap[far]
    r_minus[neg] = np.maximum(1.0 - gradmag[neg], -inf_lap[neg])
    return ResidualReport(
        r_plus=r_plus, r_zero=r_zero, r_minus=r_minus,
        norm_plus=_region_norm(r_plus, pos, excluded),
        norm_zero=_region_norm(r_zero, far, excluded),
        norm_minus=_region_norm(r_minus, neg, excluded),
        mean_value_residual=float(np.max(u.values) + np.min(u.values)),
        kink_mask=kink, stencil_invalid_mask=~valid)


@dataclass
class EikonalSplitReport:
    """Residuals of the eikonal / infinity-harmonic splitting.

    eikonal holds | |grad u| - 1 | on the support regions; the sign fields
    hold the positive parts of the violated one-sided conditions
    (superharmonic on Positive, subharmonic on Negative, harmonic on
    FarZero).
    """

    eikonal: np.ndarray
    sign_violation_plus: np.ndarray
    sign_violation_minus: np.ndarray
    harmonic_residual: np.ndarray
    eikonal_norm_plus: float
    eikonal_norm_minus: float
    sign_norm_plus: float
    sign_norm_minus: float
    harmonic_norm: float
    kink_mask: np.ndarray
    stencil_invalid_mask: np.ndarray

    def norms(self):
        return {"eikonal_positive": self.eikonal_norm_plus,
                "eikonal_negative": self.eikonal_norm_minus,
                "sign_positive": self.sign_norm_plus,
                "sign_negative": self.sign_norm_minus,
                "harmonic": self.harmonic_norm}


def eikonal_split_residuals(u, labels):
    """Eikonal error on the support and signed operator conditions."""
    gradmag, inf_lap, valid, kink, excluded = _operator_fields(u)
    n = u.domain.n_nodes
    pos, neg, far = labels.positive, labels.negative, labels.far_zero
    eikonal = np.full(n, np.nan)
    on_supp = pos | neg
    eikonal[on_supp] = np.abs(gradmag[on_supp] - 1.0)
    viol_plus = np.full(n, np.nan)
    viol_plus[pos] = np.maximum(inf_lap[pos], 0.0)  # wants L_inf u <= 0
    viol_minus = np.full(n, np.nan)
    viol_minus[neg] = np.maximum(-inf_lap[neg], 0.0)  # wants L_inf u >= 0
    harmonic = np.full(n, np.nan)
    harmonic[far] = inf_lap[far]
    return EikonalSplitReport(
        eikonal=eikonal,
        sign_violation_plus=viol_plus,
        sign_violation_minus=viol_minus,
        harmonic_residual=harmonic,
        eikonal_norm_plus=_region_norm(eikonal, pos, excluded),
        eikonal_norm_minus=_region_norm(eikonal, neg, excluded),
        sign_norm_plus=_region_norm(viol_plus, pos, excluded),
        sign_norm_minus=_region_norm(viol_minus, neg, excluded),
        harmonic_norm=_region_norm(harmonic, far, excluded),
        kink_mask=kink, stencil_invalid_mask=~valid)


def mean_value_check(u, tol):
    """True when |max u + min u| <= tol * (max u - min u)."""
    hi, lo = float(np.max(u.values)), float(np.min(u.values))
    return abs(hi + lo) <= tol * (hi - lo)


def ut_family(x, t):
    """Reference family of solutions of the limiting equation on [-1, 1].

    Piecewise: |x+t| - t on [-1, -1/2], the identity on (-1/2, 1/2), and
    t - |x-t| on [1/2, 1]; continuous, odd, unit slopes off the two kinks
    at -t and t.  At t = 1 the kinks leave the open interval and the family
    member is the identity.
    """
    if not 0.5 <= t <= 1.0:
        raise DomainError(f"t={t} outside [0.5, 1]")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + 1e-15):
        raise DomainError("x outside [-1, 1]")
    left = np.abs(x + t) - t
    right = t - np.abs(x - t)
    return np.where(x <= -0.5, left, np.where(x < 0.5, x, right))
