from .core import (BoundaryMarker, Displaced, MeshError, ObstacleLoop, OUTER_MARKERS, TriMesh,
                   apply_displacement, boundary_loop, element_quality, obstacle_loop, signed_areas, triangle_quality)
from .generate import annulus_mesh, channel_mesh, rectangle_mesh, regular_polygon
from .io import DEFAULT_MARKER_MAP, MshParseError, VtuData, load_gmsh, read_vtu, write_msh22, write_vtu
