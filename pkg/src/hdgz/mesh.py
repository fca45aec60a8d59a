"""Conforming triangular meshes of rectangles with oriented face topology.

Faces are stored with a global orientation: the face's vertex pair
(v0, v1) is the counterclockwise edge of its *owner* element (the
lower-indexed adjacent element), and the stored unit normal points out
of the owner.  The neighbor element sees the same face with sign -1.
"""

import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np


class MeshError(Exception):
    pass


class BoundaryTag(str, Enum):
    DIRICHLET_U = "dirichlet_u"
    NEUMANN_U = "neumann_u"
    DIRICHLET_PSI = "dirichlet_psi"
    NEUMANN_P = "neumann_p"


SOLID_TAGS = (BoundaryTag.DIRICHLET_U, BoundaryTag.NEUMANN_U)
FLUX_TAGS = (BoundaryTag.DIRICHLET_PSI, BoundaryTag.NEUMANN_P)

#: tag rule used when none is supplied: clamped solid, natural psi = 0
def all_dirichlet(midpoint):
    return BoundaryTag.DIRICHLET_U, BoundaryTag.DIRICHLET_PSI


def dirichlet_u_neumann_p(midpoint):
    """Boundary rule of the manufactured-solution runs: strong data for
    both the solid trace and the flux trace."""
    return BoundaryTag.DIRICHLET_U, BoundaryTag.NEUMANN_P


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray        # (nv, 2)
    elements: np.ndarray        # (ne, 3) CCW vertex triples
    faces: np.ndarray           # (nf, 2) oriented vertex pairs (owner CCW)
    owner: np.ndarray           # (nf,)
    neighbor: np.ndarray        # (nf,), -1 on boundary
    tag_solid: np.ndarray       # (nf,) object array of BoundaryTag or None
    tag_flux: np.ndarray
    normals: np.ndarray         # (nf, 2) unit normal out of owner
    h_elem: np.ndarray          # (nf,) element diameters
    h_face: np.ndarray          # (nf,) face lengths
    areas: np.ndarray           # (ne,)
    element_faces: np.ndarray   # (ne, 3) face index of local edge e
    element_face_sign: np.ndarray  # (ne, 3) +1 owner side, -1 neighbor side

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def interior_faces(self):
        return np.flatnonzero(self.neighbor >= 0)

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.neighbor < 0)

    def gamma(self):
        """Measured local quasi-uniformity constant max h_K / h_F."""
        g = self.h_elem[:, None] / self.h_face[self.element_faces]
        return float(g.max())

    def hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices).tobytes())
        h.update(np.ascontiguousarray(self.elements).tobytes())
        h.update("|".join(
            f"{t.value if t else '-'}:{f.value if f else '-'}"
            for t, f in zip(self.tag_solid, self.tag_flux)).encode())
        return h.hexdigest()

    # -- geometry helpers ---------------------------------------------------

    def element_jacobians(self):
        """Affine maps x = v0 + J xi; returns (J, det, v0) stacked arrays."""
        v = self.vertices[self.elements]          # (ne, 3, 2)
        jac = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        return jac, det, v[:, 0]

    def locate(self, points, tol=1e-10):
        """Map physical points to (element index, reference coords).

        Points outside the mesh get element index -1.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        jac, det, v0 = self.element_jacobians()
        inv = np.linalg.inv(jac)
        elem = np.full(len(points), -1, dtype=int)
        ref = np.zeros_like(points)
        vmin = self.vertices[self.elements].min(axis=1)
        vmax = self.vertices[self.elements].max(axis=1)
        remaining = np.arange(len(points))
        for e in range(self.n_elements):
            if remaining.size == 0:
                break
            p = points[remaining]
            inside_box = np.all((p >= vmin[e] - tol) & (p <= vmax[e] + tol), axis=1)
            if not inside_box.any():
                continue
            cand = remaining[inside_box]
            xi = (points[cand] - v0[e]) @ inv[e].T
            ok = (xi[:, 0] >= -tol) & (xi[:, 1] >= -tol) & (xi.sum(axis=1) <= 1 + tol)
            hit = cand[ok]
            elem[hit] = e
            ref[hit] = xi[ok]
            remaining = remaining[~np.isin(remaining, hit)]
        return elem, ref


def _build_topology(vertices, elements, tag_lookup):
    """Derive faces, adjacency, metrics from vertex/element arrays.

    ``tag_lookup`` maps a boundary face (midpoint, sorted vertex pair) to
    a (solid, flux) tag pair.
    """
    vertices = np.asarray(vertices, dtype=float)
    elements = np.asarray(elements, dtype=int)
    v = vertices[elements]
    areas = 0.5 * ((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
                   - (v[:, 2, 0] - v[:, 0, 0]) * (v[:, 1, 1] - v[:, 0, 1]))
    if np.any(areas <= 0):
        raise MeshError("element with non-positive area (orientation?)")

    edge_map = {}
    for e, tri in enumerate(elements):
        for loc in range(3):
            a, b = tri[loc], tri[(loc + 1) % 3]
            key = (min(a, b), max(a, b))
            edge_map.setdefault(key, []).append((e, loc, a, b))

    nf = len(edge_map)
    faces = np.zeros((nf, 2), dtype=int)
    owner = np.zeros(nf, dtype=int)
    neighbor = np.full(nf, -1, dtype=int)
    normals = np.zeros((nf, 2))
    h_face = np.zeros(nf)
    tag_solid = np.full(nf, None, dtype=object)
    tag_flux = np.full(nf, None, dtype=object)
    element_faces = np.full((len(elements), 3), -1, dtype=int)
    element_face_sign = np.zeros((len(elements), 3), dtype=int)

    for f, (key, adj) in enumerate(sorted(edge_map.items())):
        if len(adj) > 2:
            raise MeshError(f"face {key} shared by {len(adj)} elements")
        adj = sorted(adj)                      # owner = lower element index
        e0, loc0, a0, b0 = adj[0]
        faces[f] = (a0, b0)
        owner[f] = e0
        element_faces[e0, loc0] = f
        element_face_sign[e0, loc0] = 1
        d = vertices[b0] - vertices[a0]
        h_face[f] = np.hypot(*d)
        normals[f] = np.array([d[1], -d[0]]) / h_face[f]
        if len(adj) == 2:
            e1, loc1, _, _ = adj[1]
            neighbor[f] = e1
            element_faces[e1, loc1] = f
            element_face_sign[e1, loc1] = -1
        else:
            mid = 0.5 * (vertices[a0] + vertices[b0])
            ts, tf = tag_lookup(mid, key)
            if ts not in SOLID_TAGS or tf not in FLUX_TAGS:
                raise MeshError(f"invalid boundary tags ({ts}, {tf})")
            tag_solid[f] = ts
            tag_flux[f] = tf

    edge_len = np.linalg.norm(v - np.roll(v, -1, axis=1), axis=2)
    h_elem = edge_len.max(axis=1)

    return Mesh(vertices, elements, faces, owner, neighbor, tag_solid,
                tag_flux, normals, h_elem, h_face, areas,
                element_faces, element_face_sign)


def build_structured(domain, n, diagonal="right", tag_rule=all_dirichlet):
    """Criss-cross triangulation of an axis-aligned rectangle.

    ``domain`` is (x0, y0, x1, y1); each of the n x n cells is split in
    two by a diagonal.  ``diagonal`` is "right" (all / diagonals), "left"
    (all \\ diagonals) or "alternating" (checkerboard, which makes the
    mesh mirror-symmetric about both midlines for even n).
    """
    x0, y0, x1, y1 = map(float, domain)
    if n < 1:
        raise MeshError("n must be >= 1")
    if x1 <= x0 or y1 <= y0:
        raise MeshError("degenerate rectangle")
    if diagonal not in ("right", "left", "alternating"):
        raise MeshError(f"unknown diagonal rule {diagonal!r}")

    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    elements = []
    for i in range(n):
        for j in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            right = diagonal == "right" or (diagonal == "alternating"
                                            and (i + j) % 2 == 0)
            if right:   # diagonal v00 -- v11
                elements.append((v00, v10, v11))
                elements.append((v00, v11, v01))
            else:       # diagonal v10 -- v01
                elements.append((v00, v10, v01))
                elements.append((v10, v11, v01))

    def lookup(mid, key):
        return tag_rule(mid)

    return _build_topology(vertices, np.array(elements), lookup)


def refine_uniform(mesh):
    """Red refinement: each triangle into four similar children.

    Child boundary faces inherit the tags of the parent boundary face
    they lie on.
    """
    verts = list(map(tuple, mesh.vertices))
    midpoint_id = {}

    def mid_id(a, b):
        key = (min(a, b), max(a, b))
        if key not in midpoint_id:
            midpoint_id[key] = len(verts)
            verts.append(tuple(0.5 * (mesh.vertices[a] + mesh.vertices[b])))
        return midpoint_id[key]

    elements = []
    for (a, b, c) in mesh.elements:
        mab, mbc, mca = mid_id(a, b), mid_id(b, c), mid_id(c, a)
        elements += [(a, mab, mca), (mab, b, mbc), (mca, mbc, c),
                     (mab, mbc, mca)]

    # child boundary face -> parent tags
    parent_tags = {}
    for f in mesh.boundary_faces:
        a, b = mesh.faces[f]
        m = midpoint_id[(min(a, b), max(a, b))]
        tags = (mesh.tag_solid[f], mesh.tag_flux[f])
        parent_tags[(min(a, m), max(a, m))] = tags
        parent_tags[(min(b, m), max(b, m))] = tags

    def lookup(mid, key):
        try:
            return parent_tags[key]
        except KeyError:
            raise MeshError(f"refined boundary face {key} has no parent tag")

    return _build_topology(np.array(verts), np.array(elements), lookup)


def from_arrays(vertices, elements, tag_rule=all_dirichlet):
    """Build a mesh from externally generated vertex/element arrays."""
    def lookup(mid, key):
        return tag_rule(mid)
    return _build_topology(vertices, elements, lookup)


def skeleton_report(mesh):
    """Face counts by tag, h_F range and the measured gamma."""
    counts = {}
    for tag in BoundaryTag:
        counts[tag.value] = (sum(t is tag for t in mesh.tag_solid)
                             + sum(t is tag for t in mesh.tag_flux))
    return {
        "n_vertices": mesh.n_vertices,
        "n_elements": mesh.n_elements,
        "n_faces": mesh.n_faces,
        "n_interior_faces": int(len(mesh.interior_faces)),
        "n_boundary_faces": int(len(mesh.boundary_faces)),
        "tag_counts": counts,
        "min_h_face": float(mesh.h_face.min()),
        "max_h_face": float(mesh.h_face.max()),
        "gamma": mesh.gamma(),
    }


# ---------------------------------------------------------------------------
# plain-text import/export
# ---------------------------------------------------------------------------

def write_text(mesh, path):
    with open(path, "w") as fh:
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"elements {mesh.n_elements}\n")
        for a, b, c in mesh.elements:
            fh.write(f"{a} {b} {c}\n")
        fh.write(f"faces {mesh.n_faces}\n")
        for f in range(mesh.n_faces):
            ts = mesh.tag_solid[f].value if mesh.tag_solid[f] else "-"
            tf = mesh.tag_flux[f].value if mesh.tag_flux[f] else "-"
            v0, v1 = mesh.faces[f]
            fh.write(f"{v0} {v1} {mesh.owner[f]} {mesh.neighbor[f]} {ts} {tf}\n")


def read_text(path):
    with open(path) as fh:
        tokens = fh.read().split("\n")
    idx = 0

    def expect(word):
        nonlocal idx
        parts = tokens[idx].split()
        if len(parts) != 2 or parts[0] != word:
            raise MeshError(f"expected '{word} N' at line {idx + 1}")
        idx += 1
        return int(parts[1])

    nv = expect("vertices")
    vertices = np.array([[float(t) for t in tokens[idx + i].split()]
                         for i in range(nv)])
    idx += nv
    ne = expect("elements")
    elements = np.array([[int(t) for t in tokens[idx + i].split()]
                         for i in range(ne)], dtype=int)
    idx += ne
    nf = expect("faces")
    face_tags = {}
    for i in range(nf):
        parts = tokens[idx + i].split()
        v0, v1, _, neigh = map(int, parts[:4])
        if neigh < 0:
            ts = BoundaryTag(parts[4]) if parts[4] != "-" else None
            tf = BoundaryTag(parts[5]) if parts[5] != "-" else None
            face_tags[(min(v0, v1), max(v0, v1))] = (ts, tf)

    def lookup(mid, key):
        try:
            return face_tags[key]
        except KeyError:
            raise MeshError(f"boundary face {key} missing from file")

    return _build_topology(vertices, elements, lookup)
