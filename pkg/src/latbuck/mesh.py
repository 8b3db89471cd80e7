"""Mesh container shared by all analysis layers.

Two element families are supported: 6-node quadratic triangles (micro scale,
straight sided) and 4-node bilinear quadrilaterals (macro scale). Meshes are
immutable after construction and safe to share read-only across workers.
"""

from dataclasses import dataclass, field

import numpy as np

# nodes per element
ELEMENT_NODES = {"tri6": 6, "quad4": 4}

# corner nodes only (tri6 midside nodes carry no geometry of their own)
ELEMENT_CORNERS = {"tri6": 3, "quad4": 4}


@dataclass(frozen=True)
class Mesh:
    """Unstructured 2D mesh.

    nodes: (n_nodes, 2) coordinates in m.
    elements: (n_elems, 6|4) connectivity, type given by element_type.
    boundary_node_sets: named node-index arrays (e.g. left/right/bottom/top).
    periodic_masters/slaves/shifts: node pairing for periodic faces; each
    slave coordinate equals its master coordinate plus the shift vector.
    """

    nodes: np.ndarray
    elements: np.ndarray
    element_type: str
    boundary_node_sets: dict = field(default_factory=dict)
    periodic_masters: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    periodic_slaves: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    periodic_shifts: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        if self.element_type not in ELEMENT_NODES:
            raise ValueError(f"unknown element type {self.element_type!r}")
        if self.elements.ndim != 2 or self.elements.shape[1] != ELEMENT_NODES[self.element_type]:
            raise ValueError("connectivity shape does not match element type")

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def n_dofs(self):
        return 2 * self.nodes.shape[0]

    @property
    def periodic_pairs(self):
        """List of (master, slave, shift) tuples."""
        return [
            (int(m), int(s), self.periodic_shifts[i].copy())
            for i, (m, s) in enumerate(zip(self.periodic_masters, self.periodic_slaves))
        ]

    def corner_coords(self):
        """(n_elems, n_corners, 2) corner vertex coordinates."""
        nc = ELEMENT_CORNERS[self.element_type]
        return self.nodes[self.elements[:, :nc]]


def element_areas(mesh):
    """Signed element areas from corner vertices (positive for CCW elements).

    tri6 elements are straight sided, so the corner triangle area is exact.
    quad4 areas use the shoelace formula on the corner polygon.
    """
    xc = mesh.corner_coords()
    x = xc[..., 0]
    y = xc[..., 1]
    return 0.5 * np.sum(x * (np.roll(y, -1, axis=1) - np.roll(y, 1, axis=1)), axis=1)


def check_periodic_pairs(mesh, tol_rel=1e-9):
    """Verify slave = master + shift within tol_rel * mesh extent."""
    if mesh.periodic_masters.size == 0:
        return True
    extent = np.max(np.ptp(mesh.nodes, axis=0))
    gap = mesh.nodes[mesh.periodic_slaves] - mesh.nodes[mesh.periodic_masters] - mesh.periodic_shifts
    return float(np.max(np.abs(gap))) <= tol_rel * extent


_VTK_CELL_TYPES = {"tri6": 22, "quad4": 9}


def write_vtk(mesh, path, point_data=None, cell_data=None, title="mesh"):
    """Write a legacy ASCII VTK unstructured grid.

    point_data / cell_data: dicts of name -> array; arrays of shape (n,) are
    written as SCALARS, (n, 2) as 3-component VECTORS with zero z.
    """
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    n = mesh.n_nodes
    lines.append(f"POINTS {n} double")
    for x, y in mesh.nodes:
        lines.append(f"{x!r} {y!r} 0.0")
    npe = ELEMENT_NODES[mesh.element_type]
    ne = mesh.n_elements
    lines.append(f"CELLS {ne} {ne * (npe + 1)}")
    for conn in mesh.elements:
        lines.append(str(npe) + " " + " ".join(str(int(c)) for c in conn))
    lines.append(f"CELL_TYPES {ne}")
    ct = _VTK_CELL_TYPES[mesh.element_type]
    lines.extend([str(ct)] * ne)

    def _emit(block, count, data):
        lines.append(f"{block} {count}")
        for name, arr in data.items():
            arr = np.asarray(arr)
            if arr.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(f"{v!r}" for v in arr)
            else:
                lines.append(f"VECTORS {name} double")
                for row in arr:
                    z = row[2] if arr.shape[1] > 2 else 0.0
                    lines.append(f"{row[0]!r} {row[1]!r} {z!r}")

    if point_data:
        _emit("POINT_DATA", n, point_data)
    if cell_data:
        _emit("CELL_DATA", ne, cell_data)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
