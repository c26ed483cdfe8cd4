"""Stationary disks of almost complex domains: solver, partial indices and foliations."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .geometry import (
    AlmostComplexStructure,
    Ball,
    DeformationPath,
    Ellipsoid,
    PolynomialDomain,
    check_strong_pseudoconvexity,
    constant_structure,
    deformation_norm,
    domain_from_dict,
    levi_form,
    random_generator,
    standard_structure,
)
from .cotangent import ConormalModel, c_action, conormal_defect, lift_structure, totally_real_angle
from .disk import DiskTrace, PolarGrid, cauchy_green_extend
from .rhsolver import (
    SolverOptions,
    StationarySolution,
    continuation_path,
    linearize,
    solve_stationary_boundary,
    solve_stationary_center,
    tangency_parameter,
)
from .indices import (
    MatrixLoop,
    birkhoff_factorize,
    cokernel_dimension,
    fredholm_index,
    good_boundary_test,
    kernel_dimension,
    partial_indices_of_boundary,
    winding_number,
)
from .foliation import (
    CircularFoliation,
    ConicalFoliation,
    ConicalSpec,
    FoliationAtlas,
    build_center_foliation,
    build_conical_foliation,
    exhaustion_eval,
    riemann_map_eval,
)
