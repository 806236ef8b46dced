"""cartfem: finite elements on structured Cartesian meshes.

Conforming Lagrangian, discontinuous Galerkin and Raviart-Thomas mixed
discretizations of classic model problems, with a direct/iterative solver
layer, a Newton method with line search, error norms and VTK output. The
``cartfem`` command line tool exposes the tutorial drivers.
"""

from .cellfield import (
    Constant,
    MissingGradientError,
    Workspace,
    analytic,
    divergence,
    gradient,
    inner,
    integrate,
    jump,
    matvec,
    mean,
    norm,
    physical_coordinate,
    pointwise_law,
    restrict,
    symmetric_gradient,
    trace,
    transpose,
)
from .fespace import (
    FEFunction,
    FESpace,
    MultiFieldSpace,
    TrialSpace,
    interpolate,
    multifield,
    test_space,
    trial_space,
    zero_mean_postshift,
)
from .geometry import (
    boundary_triangulation,
    cell_quadrature,
    get_normal_vector,
    skeleton_triangulation,
    triangulation,
)
from .mesh import (
    CartesianModel,
    FaceLabeling,
    MeshFormatError,
    add_tag_from_tags,
    cartesian_model,
    read_model,
    write_model,
)
from .operators import (
    AffineOperator,
    AffineTerm,
    LinearTerm,
    NonlinearOperator,
    NonlinearTerm,
    SourceTerm,
    assemble_affine,
    nonlinear_operator,
)
from .postprocess import ConvergenceRecord, error_norms, l2_norm, read_vtk, slope, write_vtk
from .reffe import H1, HDIV, L2, gauss_rule, reference_element
from .solvers import (
    ConjugateGradient,
    NewtonSolver,
    SparseLU,
    solve_linear,
    solve_newton,
)

__version__ = "0.1.0"
