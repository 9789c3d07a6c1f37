from .assembly import (StokesAssembly, assemble_elasticity, assemble_poisson, assemble_stokes,
                       assemble_surface_helmholtz, l2_project, normal_load, p1_integrals, p1_mass,
                       p1_stiffness, surface_load, surface_mass, surface_stiffness, velocity_dirichlet)
from .linalg import (Factorization, LinearSolveError, SparseSystem, apply_dirichlet,
                     export_matrix_market, solve)
from .quadrature import edge_rule, quadrature, triangle_rule
from .spaces import (Field, FunctionSpace, SurfaceDensity, barycentric_gradients, p1_values,
                     p2_gradients, p2_values)
