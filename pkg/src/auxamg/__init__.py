"""Auxiliary-grid unsmoothed-aggregation AMG with a nonlinear AMLI (K-) cycle."""
from .auxgrid import (AggregationMap, AuxGrid, aggregate_coarse, aggregate_finest,
                      bounding_box, choose_depth, color_of, subregion_of_point)
from .cycle import CycleOptions, SolveResult, amli_cycle, coarsest_solve, nonlinear_pcg, solve
from .errors import (AmgError, ArgumentError, CapacityError, DefinitenessError, GeometryError,
                     ParseError, SingularSmootherError, SizeError, StructureError)
from .hierarchy import (Hierarchy, HierarchyOptions, Level, assemble_coarse_finest,
                        assemble_coarse_structured, build_stencil_indices, galerkin_sum,
                        prolongate, restrict, setup_hierarchy)
from .smoother import (BlockFactors, ColorSchedule, block_gs_sweep, check_color_locality,
                       factor_blocks, point_gs_sweep)
from .sparse import (CsrMatrix, DenseMatrix, EllMatrix, csr_spmv, csr_to_ell, ell_spmv,
                     read_matrix_market, write_matrix_market)

__version__ = "0.1.0"
