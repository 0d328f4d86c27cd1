"""Numerical laboratory for the balanced Neumann p-Poisson problem and its
large-exponent limit on masked grids.

Modules
-------
domain      masked grids, neighbor graphs, geodesic distance and diameter
measures    discrete signed measures, mollification, label data
calculus    fields, one-sided gradients, norms, the normalized infinity
            Laplacian, and the pointwise p-Laplacian oracle
solver      variational p-Poisson solves and exponent continuation sweeps
spectral    Rayleigh-quotient eigenvalue and Morrey-constant estimates
transport   exact graph Wasserstein-1 / KR norms with dual certificates
viscosity   region labels and residuals of the limiting degenerate PDE
experiment  config-driven runs, reports, CSV/SVG outputs
cli         the ``plimit`` command line
"""

__version__ = "0.1.0"

from .domain import (GeodesicTable, GridDomain, STENCIL_CONSTANTS,
                     build_domain, domain_from_descriptor, farthest_pair,
                     geodesic_diameter, geodesic_distance, interval_domain,
                     l_shape_domain, lambda_infinity, load_mask_text,
                     parse_mask_text, rectangle_domain, unit_square)
from .errors import (ConfigError, DegenerateGradient, DisconnectedDomain,
                     DomainError, EmptyDomain, EpsilonTooSmall,
                     InsufficientStencil, NotBalanced, PlimitError,
                     TooFewLabels, UnbalancedLabels)
from .measures import (SignedMeasure, check_compatibility, dirac, dirac_pair,
                       from_density, gaussian_blob_density, jordan_decompose,
                       load_measure_csv, measure_from_descriptor, mollify,
                       poisson_learning_measure, save_measure_csv,
                       sign_density)
from .calculus import (EdgeGradient, ScalarField, edge_gradient,
                       gradient_field, infinity_laplacian,
                       infinity_laplacian_field, lipschitz_constant,
                       lm_norm, load_field_csv, node_gradient,
                       p_dirichlet_energy, p_laplacian_pointwise,
                       save_field_csv, sup_norm)
from .solver import (SolveOptions, SolveReport, analytic_1d_solution,
                     continuation_sweep, normalization_residual,
                     normalize_generalized_mean, solve_p_poisson,
                     weak_form_residual)
from .spectral import (EigenEstimate, EigenOptions, morrey_sigma_p,
                       quotient_of, rayleigh_lambda_p)
from .transport import (TransportResult, check_potential, dual_pairing,
                        flow_conservation_units, kantorovich_gap, kr_norm,
                        verify_kr_sandwich, w1_geodesic)
from .viscosity import (EikonalSplitReport, RegionLabels, ResidualReport,
                        classify_regions, eikonal_split_residuals,
                        mean_value_check, pde_residuals, ut_family)
from .experiment import demo_poisson_learning, run_batch, run_experiment
