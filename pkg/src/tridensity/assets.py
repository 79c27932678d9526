"""Bundled mesh assets: the benchmark square and horseshoe triangulations."""

from functools import lru_cache
from importlib import resources

from .geometry import load_mesh

BUNDLED_MESHES = (
    "square_unit_32",
    "square_sim1_50",
    "horseshoe_112",
    "horseshoe_356",
)


def mesh_paths(name):
    """Filesystem paths (vertices, triangles) of a bundled mesh."""
    if name not in BUNDLED_MESHES:
        raise KeyError(f"unknown bundled mesh {name!r}; choose from {BUNDLED_MESHES}")
    root = resources.files(__package__) / "assets"
    return (
        str(root / f"{name}_vertices.csv"),
        str(root / f"{name}_triangles.csv"),
    )


@lru_cache(maxsize=None)
def load_bundled_mesh(name):
    """Load and validate a bundled mesh by name."""
    vp, tp = mesh_paths(name)
    return load_mesh(vp, tp)
