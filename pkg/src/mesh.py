"""
Mesh container, structured builders and the plain-text mesh format.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from src.errors import ArgumentError, DataError

logger = logging.getLogger(__name__)

ELEMENT_KINDS = {"truss2": 2, "quad9": 9}


@dataclass
class Mesh:
    """
    Nodes, connectivity and named boundary edges.

    `section` is the cross-section area A for truss meshes and the
    thickness L_z for plane-stress meshes. An edge is a list of segments:
    single nodes for trusses, [start, mid, end] triples for quad9.
    """

    nodes: np.ndarray
    elements: np.ndarray
    kind: str = "quad9"
    material_ids: np.ndarray | None = None
    section: float = 1.0
    density: dict = field(default_factory=lambda: {0: 1.0})
    edges: dict = field(default_factory=dict)
    finite_strain: bool = False

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.elements = np.asarray(self.elements, dtype=int)
        if self.kind not in ELEMENT_KINDS:
            raise ArgumentError(f"Unknown element kind {self.kind!r}")
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise ArgumentError("Node coordinates must have shape (n_nodes, 2)")
        if self.elements.ndim != 2 or self.elements.shape[1] != ELEMENT_KINDS[self.kind]:
            raise ArgumentError(
                f"{self.kind} connectivity needs {ELEMENT_KINDS[self.kind]} nodes per element"
            )
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= self.n_nodes):
            raise ArgumentError("Connectivity references a node that does not exist")
        if self.material_ids is None:
            self.material_ids = np.zeros(self.n_elements, dtype=int)
        self.material_ids = np.asarray(self.material_ids, dtype=int)
        if self.material_ids.shape != (self.n_elements,):
            raise ArgumentError("One material id per element is required")
        missing = set(np.unique(self.material_ids)) - set(self.density)
        if missing:
            raise ArgumentError(f"No density for material ids {sorted(missing)}")
        if self.section <= 0:
            raise ArgumentError("Cross-section / thickness must be positive")
        self.edges = {k: np.asarray(v, dtype=int).reshape(len(v), -1) for k, v in self.edges.items()}
        if self.kind == "truss2":
            self.finite_strain = True

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    def element_dofs(self):
        """(n_el, 2·nen) global dof indices."""
        return (2 * self.elements[:, :, None] + np.arange(2)).reshape(self.n_elements, -1)

    def edge_nodes(self, name: str):
        if name not in self.edges:
            raise ArgumentError(f"Mesh has no edge {name!r}; available: {sorted(self.edges)}")
        return np.unique(self.edges[name])

    def element_density(self):
        return np.array([self.density[m] for m in self.material_ids], dtype=float)


# -------------------------------------------------------------------
# Builders
# -------------------------------------------------------------------
def truss_mesh(n_elements=4, element_length=1.0, area=0.005, density=8000.0):
    """Straight truss along x with edges 'left' and 'right' (end nodes)."""
    if n_elements < 1:
        raise ArgumentError("A truss needs at least one element")
    x = np.arange(n_elements + 1) * element_length
    nodes = np.column_stack([x, np.zeros_like(x)])
    elements = np.column_stack([np.arange(n_elements), np.arange(1, n_elements + 1)])
    return Mesh(
        nodes, elements, "truss2", section=area, density={0: density},
        edges={"left": [[0]], "right": [[n_elements]]},
    )


def _grid_id(i, j, nx):
    return j * (2 * nx + 1) + i


def plate_mesh(nx=10, ny=5, Lx=0.1, Ly=0.05, Lz=0.001, density=1.0,
               finite_strain=False, material_ids=None):
    """
    Rectangular quad9 plate on [0, Lx] × [0, Ly].

    Nodes lie on a (2nx+1) × (2ny+1) grid numbered row by row from the
    bottom-left corner. Edges: bottom, right, top, left.
    """
    if nx < 1 or ny < 1:
        raise ArgumentError("Plate needs at least one element per direction")
    xs = np.linspace(0.0, Lx, 2 * nx + 1)
    ys = np.linspace(0.0, Ly, 2 * ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    elements = []
    for ey in range(ny):
        for ex in range(nx):
            i0, j0 = 2 * ex, 2 * ey
            g = lambda di, dj: _grid_id(i0 + di, j0 + dj, nx)
            elements.append([
                g(0, 0), g(2, 0), g(2, 2), g(0, 2),
                g(1, 0), g(2, 1), g(1, 2), g(0, 1), g(1, 1),
            ])

    def segments(ids):
        return [ids[k:k + 3] for k in range(0, len(ids) - 1, 2)]

    nxn, nyn = 2 * nx + 1, 2 * ny + 1
    edges = {
        "bottom": segments([_grid_id(i, 0, nx) for i in range(nxn)]),
        "top": segments([_grid_id(i, nyn - 1, nx) for i in range(nxn)]),
        "left": segments([_grid_id(0, j, nx) for j in range(nyn)]),
        "right": segments([_grid_id(nxn - 1, j, nx) for j in range(nyn)]),
    }
    if isinstance(density, dict):
        dens = density
    else:
        dens = {0: float(density)}
    return Mesh(nodes, np.array(elements), "quad9", material_ids, Lz, dens, edges, finite_strain)


def fiber_material_ids(nx, ny, n_fibers=(4, 2), fiber_elements=5):
    """
    Material ids for square fibers (id 1) in a matrix (id 0).

    Fibers sit at the centre of a regular n_fibers[0] × n_fibers[1] array
    of cells, each `fiber_elements` elements wide.
    """
    fx, fy = n_fibers
    if nx % fx or ny % fy:
        raise ArgumentError("Mesh size must be divisible by the fiber array")
    cx, cy = nx // fx, ny // fy
    if fiber_elements > min(cx, cy):
        raise ArgumentError("Fibers do not fit in their cells")
    ox, oy = (cx - fiber_elements) // 2, (cy - fiber_elements) // 2
    ids = np.zeros((ny, nx), dtype=int)
    for a in range(fx):
        for b in range(fy):
            x0, y0 = a * cx + ox, b * cy + oy
            ids[y0:y0 + fiber_elements, x0:x0 + fiber_elements] = 1
    return ids.ravel()


def fiber_plate_mesh(nx=40, ny=20, Lx=0.1, Ly=0.05, Lz=0.001, density=(4200.0, 3200.0),
                     n_fibers=(4, 2), fiber_elements=5, finite_strain=False):
    ids = fiber_material_ids(nx, ny, n_fibers, fiber_elements)
    mesh = plate_mesh(nx, ny, Lx, Ly, Lz, {0: density[0], 1: density[1]},
                      finite_strain, material_ids=ids)
    logger.info(f"Fiber plate: {nx}x{ny} elements, fiber fraction {ids.mean():.2f}")
    return mesh


def match_nodes(fine: Mesh, coarse: Mesh, tol=1e-9):
    """Index of the fine-mesh node coinciding with every coarse-mesh node."""
    scale = max(np.ptp(fine.nodes[:, 0]), np.ptp(fine.nodes[:, 1]), 1.0)
    diff = np.abs(coarse.nodes[:, None, :] - fine.nodes[None, :, :]).max(axis=-1)
    idx = diff.argmin(axis=1)
    if np.any(diff[np.arange(coarse.n_nodes), idx] > tol * scale):
        raise ArgumentError("Coarse mesh nodes do not coincide with fine mesh nodes")
    return idx


# -------------------------------------------------------------------
# Text format (grammar in README.md)
# -------------------------------------------------------------------
def write_mesh(path, mesh: Mesh) -> None:
    lines = [
        f"kind {mesh.kind}",
        f"strain {'finite' if mesh.finite_strain else 'small'}",
        f"section {mesh.section!r}",
        f"nodes {mesh.n_nodes}",
    ]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes]
    lines.append(f"elements {mesh.n_elements} {mesh.elements.shape[1]}")
    lines += [
        " ".join(str(v) for v in (m, *conn))
        for m, conn in zip(mesh.material_ids, mesh.elements)
    ]
    lines.append(f"density {len(mesh.density)}")
    lines += [f"{m} {rho!r}" for m, rho in sorted(mesh.density.items())]
    for name, segs in mesh.edges.items():
        lines.append(f"edge {name} {segs.shape[0]} {segs.shape[1]}")
        lines += [" ".join(str(n) for n in seg) for seg in segs]

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    path = Path(path)
    if not path.exists():
        raise DataError(f"Mesh file {path} not found")
    rows = [
        ln.split() for ln in path.read_text().splitlines()
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    fields = {"edges": {}, "density": {}}
    k = 0
    try:
        while k < len(rows):
            key, args = rows[k][0], rows[k][1:]
            k += 1
            if key == "kind":
                fields["kind"] = args[0]
            elif key == "strain":
                fields["finite_strain"] = args[0] == "finite"
            elif key == "section":
                fields["section"] = float(args[0])
            elif key == "nodes":
                n = int(args[0])
                fields["nodes"] = np.array(rows[k:k + n], dtype=float)
                k += n
            elif key == "elements":
                n = int(args[0])
                block = np.array(rows[k:k + n], dtype=int)
                fields["material_ids"], fields["elements"] = block[:, 0], block[:, 1:]
                k += n
            elif key == "density":
                n = int(args[0])
                fields["density"] = {int(r[0]): float(r[1]) for r in rows[k:k + n]}
                k += n
            elif key == "edge":
                name, n = args[0], int(args[1])
                fields["edges"][name] = [[int(v) for v in r] for r in rows[k:k + n]]
                k += n
            else:
                raise DataError(f"{path}: unknown block {key!r}")
        return Mesh(**fields)
    except (IndexError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: malformed mesh file ({exc})")
