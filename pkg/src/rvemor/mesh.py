"""Periodic voxel RVE with spherical pores.

The cell ``[0, L]^3`` is cut into ``n^3`` cubic voxels; a voxel is removed
when its centroid lies inside any pore (minimum-image distance, so pores
may straddle the cell boundary). Remaining voxels become 8-node trilinear
hexahedra integrated with 2x2x2 Gauss quadrature.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, DisconnectedMatrix, EmptyMatrix, UnmatchedBoundaryNode

# reference hexahedron corners in natural coordinates
HEX_CORNERS = np.array(
    [[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
     [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]],
    dtype=float,
)
_GP = HEX_CORNERS / np.sqrt(3.0)

DEFAULT_PORES = ((0.7, 0.7, 0.7, 0.667), (1.3, 1.3, 1.2, 0.667))


@dataclass(frozen=True)
class Pore:
    center: tuple
    radius: float


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray  # (N, 3) reference coordinates, mm
    elements: np.ndarray  # (E, 8) node indices
    edge_length: float
    pores: tuple = ()
    n_voxels: int = 0

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def cell_volume(self):
        return self.edge_length**3

    def digest(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.nodes).tobytes())
        h.update(np.ascontiguousarray(self.elements).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class GaussTable:
    """Per-Gauss-point data in element-major order (8 points per element)."""

    X: np.ndarray  # (G, 3)
    volume: np.ndarray  # (G,)
    dNdX: np.ndarray  # (G, 8, 3) shape-function gradients
    element: np.ndarray  # (G,) owning element
    connectivity: np.ndarray = field(repr=False, default=None)  # (G, 8) node indices

    @property
    def n_points(self):
        return len(self.volume)

    def matrix_volume(self):
        return float(np.sum(self.volume))


@dataclass(frozen=True, eq=False)
class PeriodicMap:
    node_class: np.ndarray  # (N,) periodic class of each node
    n_classes: int
    anchor: int  # class whose displacement is pinned
    pairs: dict  # {"face"|"edge"|"corner": (k, 2) array of (slave, master)}

    @property
    def n_dofs(self):
        return 3 * (self.n_classes - 1)

    def node_dofs(self):
        """(N, 3) independent DOF index per node/component; -1 for pinned."""
        cls = self.node_class.copy()
        cls = np.where(cls > self.anchor, cls - 1, cls)
        dofs = 3 * cls[:, None] + np.arange(3)[None, :]
        dofs[self.node_class == self.anchor] = -1
        return dofs


def _parse_pores(pores):
    out = []
    for p in pores:
        if isinstance(p, Pore):
            out.append(p)
        else:
            *c, r = p
            if len(c) != 3 or r <= 0:
                raise ConfigError(f"bad pore specification {p!r}")
            out.append(Pore(tuple(float(x) for x in c), float(r)))
    return tuple(out)


def _solid_voxels(n, L, pores):
    h = L / n
    idx = np.stack(np.meshgrid(*(np.arange(n),) * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    centroids = (idx + 0.5) * h
    solid = np.ones(len(idx), dtype=bool)
    for p in pores:
        d = centroids - np.asarray(p.center)
        d -= L * np.round(d / L)
        solid &= np.einsum("ij,ij->i", d, d) >= p.radius**2
    return idx[solid]


def _check_connected(vox, n):
    lookup = -np.ones((n, n, n), dtype=int)
    lookup[tuple(vox.T)] = np.arange(len(vox))
    rows, cols = [], []
    for axis in range(3):
        nb = vox.copy()
        nb[:, axis] = (nb[:, axis] + 1) % n
        j = lookup[tuple(nb.T)]
        ok = j >= 0
        rows.append(np.flatnonzero(ok))
        cols.append(j[ok])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    g = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(vox),) * 2)
    n_comp, _ = connected_components(g, directed=False)
    if n_comp > 1:
        raise DisconnectedMatrix(f"matrix phase splits into {n_comp} face-connected parts")


def build_rve(n_voxels=8, pores=DEFAULT_PORES, L=2.0):
    """Voxel hexahedral RVE of edge length ``L`` with ``n_voxels`` per edge.

    ``pores`` is a sequence of ``(cx, cy, cz, r)`` tuples or :class:`Pore`.
    Nodes are kept when their periodic image is used by some element, so
    the node sets on opposite faces always pair up.
    """
    n = int(n_voxels)
    if n < 2:
        raise ConfigError("n_voxels must be >= 2")
    if not L > 0:
        raise ConfigError("edge length must be positive")
    pores = _parse_pores(pores)
    vox = _solid_voxels(n, L, pores)
    if len(vox) == 0:
        raise EmptyMatrix("all voxels fall inside pores")
    _check_connected(vox, n)

    m = n + 1
    corner_offsets = ((HEX_CORNERS + 1) / 2).astype(int)
    grid_conn = vox[:, None, :] + corner_offsets[None, :, :]  # (E, 8, 3) grid ijk
    flat = np.ravel_multi_index(tuple(np.moveaxis(grid_conn, -1, 0)), (m, m, m))

    used_cls = np.zeros((n, n, n), dtype=bool)
    used_cls[tuple(np.moveaxis(grid_conn % n, -1, 0))] = True
    gi = np.stack(np.meshgrid(*(np.arange(m),) * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    keep = used_cls[tuple((gi % n).T)]
    new_id = -np.ones(m**3, dtype=int)
    new_id[keep] = np.arange(keep.sum())
    nodes = gi[keep] * (L / n)
    elements = new_id[flat]
    return Mesh(nodes=nodes, elements=elements, edge_length=float(L), pores=pores, n_voxels=n)


def gauss_table(mesh):
    """2x2x2 Gauss data; ``V^g`` = quadrature weight (1) x det J.

    Voxel elements are parallelepipeds, so J is constant per element and is
    taken from the edge vectors. On a grid with representable spacing the
    point volumes are then exact and sum to the matrix volume in any order.
    """
    xe = mesh.nodes[mesh.elements]  # (E, 8, 3)
    # trilinear shape-function derivatives at each Gauss point: (8gp, 8nodes, 3)
    c, q = HEX_CORNERS, _GP
    t = 1.0 + q[:, None, :] * c[None, :, :]  # (gp, a, 3)
    dN = np.empty((8, 8, 3))
    dN[..., 0] = c[None, :, 0] * t[..., 1] * t[..., 2] / 8
    dN[..., 1] = c[None, :, 1] * t[..., 0] * t[..., 2] / 8
    dN[..., 2] = c[None, :, 2] * t[..., 0] * t[..., 1] / 8
    edges = 0.5 * (xe[:, [1, 3, 4]] - xe[:, [0]])  # rows: d x / d xi_k
    J = np.broadcast_to(edges.transpose(0, 2, 1)[:, None], (len(xe), 8, 3, 3))
    # triple product rather than LU: exact for axis-aligned voxels
    detJ = np.broadcast_to(np.einsum("ei,ei->e", edges[:, 0], np.cross(edges[:, 1], edges[:, 2]))[:, None],
                           (len(xe), 8))
    if np.any(detJ <= 0):
        raise ConfigError("element with non-positive Jacobian")
    Jinv = np.linalg.inv(J)
    dNdX = np.einsum("gak,egkj->egaj", dN, Jinv)
    Xg = np.einsum("ga,eai->egi", (t[..., 0] * t[..., 1] * t[..., 2]) / 8, xe)
    E = mesh.n_elements
    return GaussTable(
        X=Xg.reshape(-1, 3),
        volume=detJ.reshape(-1),
        dNdX=dNdX.reshape(-1, 8, 3),
        element=np.repeat(np.arange(E), 8),
        connectivity=np.repeat(mesh.elements, 8, axis=0),
    )


def periodic_pairs(mesh, tol=1e-9):
    """Group nodes into periodic classes by wrapping coordinates into [0, L)."""
    L = mesh.edge_length
    eps = tol * L
    X = mesh.nodes
    on_hi = np.abs(X - L) <= eps
    on_lo = np.abs(X) <= eps
    wrapped = np.where(on_hi, 0.0, X)
    key = np.round(wrapped / eps).astype(np.int64)
    _, cls, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    cls = cls.reshape(-1)
    n_bnd = np.sum(on_lo | on_hi, axis=1)
    if np.any(counts[cls] != 2**n_bnd):
        bad = np.flatnonzero(counts[cls] != 2**n_bnd)
        raise UnmatchedBoundaryNode(f"{bad.size} boundary node(s) lack a periodic partner, e.g. node {bad[0]}")

    master = np.full(counts.size, np.iinfo(np.int64).max)
    np.minimum.at(master, cls, np.arange(len(X)))
    kinds = {1: "face", 2: "edge", 3: "corner"}
    pairs = {}
    slaves = np.flatnonzero(master[cls] != np.arange(len(X)))
    for k, name in kinds.items():
        s = slaves[n_bnd[slaves] == k]
        pairs[name] = np.stack([s, master[cls[s]]], axis=1)
    return PeriodicMap(node_class=cls, n_classes=int(counts.size), anchor=int(cls[0]), pairs=pairs)


def export_mesh(mesh, path):
    """Plain-text dump: header, node table (id x y z), element table (id n0..n7)."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("# rvemor voxel mesh v1\n")
        f.write(f"edge_length {mesh.edge_length!r}\n")
        f.write(f"n_voxels {mesh.n_voxels}\n")
        for p in mesh.pores:
            f.write("pore {} {} {} {}\n".format(*p.center, p.radius))
        f.write(f"nodes {mesh.n_nodes}\n")
        for i, x in enumerate(mesh.nodes):
            f.write(f"{i} {x[0]!r} {x[1]!r} {x[2]!r}\n")
        f.write(f"elements {mesh.n_elements}\n")
        for i, e in enumerate(mesh.elements):
            f.write(f"{i} " + " ".join(str(int(a)) for a in e) + "\n")
