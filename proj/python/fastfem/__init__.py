from ._fastfem import InvalidArgument, Mesh, Scenario, __version__, generate_beam

__all__ = ["InvalidArgument", "Mesh", "Scenario", "generate_beam", "__version__"]
