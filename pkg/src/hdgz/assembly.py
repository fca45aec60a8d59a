"""Element-local assembly and static condensation for the HDG scheme.

Local degree-of-freedom order per element:
    [u_x, u_y, p_x, p_y] each of size N1 = dim P_{k+1},
    [sE_11, sE_22, sE_12, (sV_11, sV_22, sV_12 if omega > 0)] of size N0,
    [psi] of size N0.
Per face the trace block is [uhat_x, uhat_y, phat_x, phat_y], each of
size nfb = k + 2; local trace vectors concatenate the element's three
faces.  All bases are orthonormal on the reference element, so volume
mass matrices are (small-block) diagonal scaled by det J.

The discrete-in-time operator for one Crank-Nicolson step, written in
the midpoint unknowns (ybar, lam), is (2/dt) M + K with
K = B + Diss + Stab; B is the skew coupling block, Diss the symmetric
positive semidefinite dissipation and Stab the jump penalties with
weight (k+1)^2 / h_F.  Volume unknowns are eliminated per element
(Schur complement) onto the face traces; the skeleton matrix is
factorized once per (mesh, material, dt, bc) combination.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .basis import (face_basis, segment_rule, triangle_rule, volume_basis,
                    volume_dim)
from .materials import isotropic_weight_matrix
from .mesh import BoundaryTag


class AssemblyError(Exception):
    pass


def scheme_exactness(k):
    """Default quadrature degree: exact for all constant-coefficient
    scheme integrals (integrands of degree <= 2(k+2))."""
    return 2 * (k + 2) + 2


# reference edge parametrizations: local edge le runs from vertex le to
# vertex le+1 (mod 3); u is the arclength fraction along that direction
_EDGE_ENDS = ((np.array([0.0, 0.0]), np.array([1.0, 0.0])),
              (np.array([1.0, 0.0]), np.array([0.0, 1.0])),
              (np.array([0.0, 1.0]), np.array([0.0, 0.0])))


@lru_cache(maxsize=None)
def reference_tables(k, exactness):
    """Shared reference-element evaluation tables for degree k."""
    vb1 = volume_basis(k + 1)
    vb0 = volume_basis(k)
    fb = face_basis(k + 1)
    vrule = triangle_rule(exactness)
    srule = segment_rule(exactness)

    tab = {
        "N1": vb1.dim, "N0": vb0.dim, "nfb": fb.dim,
        "w": vrule.weights, "pts": vrule.points,
        "phi1": vb1.eval(vrule.points),
        "grad1": vb1.grad(vrule.points),
        "phi0": vb0.eval(vrule.points),
        "fw": srule.weights, "ft": srule.points,
        "fhat": fb.eval(srule.points),           # (nqf, nfb)
    }
    # volume-basis traces on each local edge, for both traversal signs
    t = srule.points
    for le, (p0, p1) in enumerate(_EDGE_ENDS):
        for sign in (1, -1):
            u = t if sign == 1 else 1.0 - t
            pts = np.outer(1.0 - u, p0) + np.outer(u, p1)
            tab[("tr1", le, sign)] = vb1.eval(pts)
            tab[("tr0", le, sign)] = vb0.eval(pts)
    return tab


@dataclass(frozen=True)
class DofLayout:
    """Block sizes and skeleton numbering for degree k on a tagged mesh."""

    mesh: object
    matfield: object
    k: int
    N1: int
    N0: int
    nfb: int
    visc: np.ndarray            # (ne,) bool: sigma_V present
    nloc: np.ndarray            # (ne,)
    vol_offset: np.ndarray      # (ne,) monolithic numbering of volume dofs
    n_volume: int
    face_offset: np.ndarray     # (nf,) offset into the *full* trace layout
    block: int                  # full trace block size per face = 4 nfb
    u_free: np.ndarray          # (nf,) bool
    p_free: np.ndarray          # (nf,) bool
    full_to_free: np.ndarray    # (nf*block,) skeleton index or -1
    n_skeleton: int

    @property
    def n_trace_full(self):
        return self.mesh.n_faces * self.block

    def local_slices(self, e):
        N1, N0 = self.N1, self.N0
        s = {"u": slice(0, 2 * N1), "p": slice(2 * N1, 4 * N1),
             "sE": slice(4 * N1, 4 * N1 + 3 * N0)}
        off = 4 * N1 + 3 * N0
        if self.visc[e]:
            s["sV"] = slice(off, off + 3 * N0)
            off += 3 * N0
        s["psi"] = slice(off, off + N0)
        return s

    def elem_trace_full_idx(self, e):
        """Full-layout trace indices for the element's 3 face blocks."""
        idx = np.empty(3 * self.block, dtype=int)
        for le, f in enumerate(self.mesh.element_faces[e]):
            base = self.face_offset[f]
            idx[le * self.block:(le + 1) * self.block] = np.arange(
                base, base + self.block)
        return idx


def make_layout(mesh, matfield, k):
    N1, N0, nfb = volume_dim(k + 1), volume_dim(k), k + 2
    visc = np.array([matfield.of(e).viscoelastic
                     for e in range(mesh.n_elements)])
    nloc = np.where(visc, 4 * N1 + 6 * N0 + N0, 4 * N1 + 3 * N0 + N0)
    vol_offset = np.concatenate([[0], np.cumsum(nloc)[:-1]])
    n_volume = int(nloc.sum())

    block = 4 * nfb
    face_offset = np.arange(mesh.n_faces) * block
    u_free = np.ones(mesh.n_faces, dtype=bool)
    p_free = np.ones(mesh.n_faces, dtype=bool)
    for f in mesh.boundary_faces:
        u_free[f] = mesh.tag_solid[f] is BoundaryTag.NEUMANN_U
        p_free[f] = mesh.tag_flux[f] is BoundaryTag.DIRICHLET_PSI

    full_to_free = np.full(mesh.n_faces * block, -1, dtype=int)
    nsk = 0
    for f in range(mesh.n_faces):
        if u_free[f]:
            full_to_free[face_offset[f]:face_offset[f] + 2 * nfb] = \
                np.arange(nsk, nsk + 2 * nfb)
            nsk += 2 * nfb
        if p_free[f]:
            base = face_offset[f] + 2 * nfb
            full_to_free[base:base + 2 * nfb] = np.arange(nsk, nsk + 2 * nfb)
            nsk += 2 * nfb
    return DofLayout(mesh, matfield, k, N1, N0, nfb, visc, nloc, vol_offset,
                     n_volume, face_offset, block, u_free, p_free,
                     full_to_free, nsk)


@dataclass
class LocalBlocks:
    """Dense per-element operator pieces over [volume dofs | trace dofs]."""

    nloc: int
    ntr: int
    mass: np.ndarray            # (nloc, nloc) SPD
    bh: np.ndarray              # (n, n) skew coupling, n = nloc + ntr
    diss: np.ndarray            # (n, n) sym PSD
    stab: np.ndarray            # (n, n) sym PSD
    det: float
    face_quads: list            # per local face, data for jump norms

    def spatial(self):
        return self.bh + self.diss + self.stab


def assemble_local(e, mesh, matfield, layout, exactness=None):
    """Build all bilinear-form blocks for element e."""
    k = layout.k
    tab = reference_tables(k, exactness or scheme_exactness(k))
    N1, N0, nfb = layout.N1, layout.N0, layout.nfb
    mat = matfield.of(e)
    visc = layout.visc[e]
    omega = mat.omega

    verts = mesh.vertices[mesh.elements[e]]
    jac = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    if det <= 0:
        raise AssemblyError(f"element {e}: non-positive Jacobian")
    inv_jt = np.linalg.inv(jac).T

    nloc = int(layout.nloc[e])
    ntr = 3 * layout.block
    n = nloc + ntr
    sl = layout.local_slices(e)
    U, P, E, S = sl["u"], sl["p"], sl["sE"], sl["psi"]
    V = sl.get("sV")

    # physical gradients of the degree-(k+1) basis at volume quad points
    gphys = tab["grad1"] @ inv_jt.T                     # (nq, N1, 2)
    # D_d[a, j] = int_K phi0_a  d_d phi1_j
    D = det * np.einsum("q,qa,qjd->daj", tab["w"], tab["phi0"], gphys)
    D1, D2 = D[0], D[1]

    w_a = mat.weight_a()
    w_g = mat.weight_g() if visc else None

    # --- masses ------------------------------------------------------------
    mass = np.zeros((nloc, nloc))
    mass[U, U] = mat.rho * det * np.eye(2 * N1)
    mass[P, P] = mat.chi * det * np.eye(2 * N1)
    mass[E, E] = det * np.kron(w_a, np.eye(N0))
    if visc:
        mass[V, V] = omega ** 2 * det * np.kron(w_g, np.eye(N0))
    mass[S, S] = mat.s * det * np.eye(N0)

    # --- dissipation ---------------------------------------------------------
    diss = np.zeros((n, n))
    diss[P, P] = mat.beta * det * np.eye(2 * N1)
    if visc:
        diss[V, V] = omega * det * np.kron(w_g, np.eye(N0))

    # --- B_h volume part -----------------------------------------------------
    bh = np.zeros((n, n))

    def add_bh(rows, cols, block):
        bh[rows, cols] += block
        bh[cols, rows] -= block.T

    # (tau, eps(v)): columns (3 N0 tensor components) against rows (2 N1)
    Beps = np.zeros((2 * N1, 3 * N0))
    Beps[0 * N1:1 * N1, 0 * N0:1 * N0] = D1.T
    Beps[0 * N1:1 * N1, 2 * N0:3 * N0] = D2.T
    Beps[1 * N1:2 * N1, 1 * N0:2 * N0] = D2.T
    Beps[1 * N1:2 * N1, 2 * N0:3 * N0] = D1.T
    # (phi, div v): (2 N1) x N0
    Bdiv = np.zeros((2 * N1, N0))
    Bdiv[:N1] = D1.T
    Bdiv[N1:] = D2.T

    add_bh(U, E, Beps)
    if visc:
        add_bh(U, sl["sV"], omega * Beps)
    add_bh(U, S, -mat.alpha * Bdiv)
    add_bh(P, S, -Bdiv)

    # --- face terms ----------------------------------------------------------
    stab = np.zeros((n, n))
    kappa0 = (k + 1) ** 2
    face_quads = []
    fw, fhat = tab["fw"], tab["fhat"]
    for le in range(3):
        f = mesh.element_faces[e][le]
        sign = mesh.element_face_sign[e][le]
        nvec = sign * mesh.normals[f]
        length = mesh.h_face[f]
        kappa = kappa0 / length
        # trace tables for sign -1 are tabulated at u = 1 - t, so every
        # row q below refers to the same physical point x(t_q) on both sides
        tr1 = tab[("tr1", le, sign)]                    # (nqf, N1)
        tr0 = tab[("tr0", le, sign)]
        fh = fhat
        wl = fw * length

        # face mass pieces (scalar component)
        Svv = np.einsum("q,qi,qj->ij", wl, tr1, tr1)
        Svf = np.einsum("q,qi,qm->im", wl, tr1, fh)
        Sff = length * np.eye(nfb)
        # Tn[a, j] = int_F phi0_a phi1_j ; Tnf[a, m] = int_F phi0_a fhat_m
        T0v = np.einsum("q,qa,qj->aj", wl, tr0, tr1)
        T0f = np.einsum("q,qa,qm->am", wl, tr0, fh)

        tr_off = nloc + le * layout.block
        Uh = slice(tr_off, tr_off + 2 * nfb)
        Ph = slice(tr_off + 2 * nfb, tr_off + 4 * nfb)

        # <(tau_E + omega tau_V - alpha phi I) n, v - vhat> with the
        # B_h sign convention: subtract for volume test, add for trace test
        def sig_pair(T0x, width):
            # rows (2*width) for (v or vhat) x, cols (3 N0) tensor block
            blk = np.zeros((2 * width, 3 * N0))
            blk[0 * width:1 * width, 0 * N0:1 * N0] = nvec[0] * T0x.T
            blk[1 * width:2 * width, 1 * N0:2 * N0] = nvec[1] * T0x.T
            blk[0 * width:1 * width, 2 * N0:3 * N0] = nvec[1] * T0x.T
            blk[1 * width:2 * width, 2 * N0:3 * N0] = nvec[0] * T0x.T
            return blk

        def n_pair(T0x, width):
            # rows (2*width), cols N0: phi n dotted with (v or q) field
            blk = np.zeros((2 * width, N0))
            blk[0 * width:1 * width] = nvec[0] * T0x.T
            blk[1 * width:2 * width] = nvec[1] * T0x.T
            return blk

        Gv, Gvh = sig_pair(T0v, N1), sig_pair(T0f, nfb)
        Hv, Hvh = n_pair(T0v, N1), n_pair(T0f, nfb)

        add_bh(U, E, -Gv)
        add_bh(Uh, E, Gvh)
        if visc:
            add_bh(U, sl["sV"], -omega * Gv)
            add_bh(Uh, sl["sV"], omega * Gvh)
        add_bh(U, S, mat.alpha * Hv)
        add_bh(Uh, S, -mat.alpha * Hvh)
        # + <phi n, q - qhat>
        add_bh(P, S, Hv)
        add_bh(Ph, S, -Hvh)

        # stabilization (k+1)^2/h_F on both jump fields, per component
        for comp in range(2):
            vs = slice(sl["u"].start + comp * N1, sl["u"].start + (comp + 1) * N1)
            hs = slice(Uh.start + comp * nfb, Uh.start + (comp + 1) * nfb)
            qs = slice(sl["p"].start + comp * N1, sl["p"].start + (comp + 1) * N1)
            gs = slice(Ph.start + comp * nfb, Ph.start + (comp + 1) * nfb)
            for a, b in ((vs, hs), (qs, gs)):
                stab[a, a] += kappa * Svv
                stab[a, b] -= kappa * Svf
                stab[b, a] -= kappa * Svf.T
                stab[b, b] += kappa * Sff

        face_quads.append({"Svv": Svv, "Svf": Svf, "len": length,
                           "kappa": kappa})

    return LocalBlocks(nloc, ntr, mass, bh, diss, stab, det, face_quads)


# ---------------------------------------------------------------------------
# grouped element data and static condensation
# ---------------------------------------------------------------------------

@dataclass
class ElementGroup:
    """Elements sharing identical local blocks (geometry + material)."""

    elems: np.ndarray           # (ng,)
    nloc: int
    visc: bool
    mass: np.ndarray            # (nloc, nloc)
    a_inv: np.ndarray           # inverse of (2/dt) mass + K_vol
    cpl: np.ndarray             # (nloc, ntr) volume-to-trace coupling
    rows: np.ndarray            # (ntr, nloc) trace-row coupling
    tmat: np.ndarray            # (ntr, ntr)
    schur: np.ndarray           # tmat - rows @ a_inv @ cpl
    det: float
    beta_det: float
    diss_v: np.ndarray | None   # quadratic form weight for viscous loss
    svv: np.ndarray             # (3, N1, N1) face mass pieces
    svf: np.ndarray             # (3, N1, nfb)
    lens: np.ndarray            # (3,)
    kappas: np.ndarray          # (3,)
    gidx: np.ndarray            # (ng, nloc) global volume dof indices
    tidx: np.ndarray            # (ng, ntr) full-trace-layout indices
    slices: dict


@dataclass
class CondensedSystem:
    """Factorized one-step operator: skeleton solve + local recovery."""

    mesh: object
    matfield: object
    layout: DofLayout
    dt: float
    groups: list
    skeleton_lu: object
    skeleton_matrix: object
    factorization_count: int
    # face quadrature geometry for boundary data / trace projections
    face_pts: np.ndarray        # (nf, nqf, 2)
    fhat: np.ndarray            # (nqf, nfb)
    fw: np.ndarray
    # volume quadrature geometry for load vectors
    elem_pts: np.ndarray        # (ne, nq, 2)
    elem_det: np.ndarray
    phi1: np.ndarray
    phi0: np.ndarray
    wq: np.ndarray

    # -- loads and data -----------------------------------------------------

    def load_vector(self, force, source, t):
        """Assemble (F, v) + (g, phi) into a global volume vector.

        ``force(x, t)`` maps (n, 2) points to (n, 2) body-force values,
        ``source(x, t)`` to (n,) scalar values; either may be None.
        """
        lay = self.layout
        load = np.zeros(lay.n_volume)
        if force is None and source is None:
            return load
        ne, nq = self.elem_pts.shape[:2]
        flat = self.elem_pts.reshape(-1, 2)
        if force is not None:
            fv = np.asarray(force(flat, t), dtype=float).reshape(ne, nq, 2)
            lu = np.einsum("e,q,eqc,qj->ecj", self.elem_det, self.wq, fv,
                           self.phi1)
        if source is not None:
            gv = np.asarray(source(flat, t), dtype=float).reshape(ne, nq)
            lg = np.einsum("e,q,eq,qa->ea", self.elem_det, self.wq, gv,
                           self.phi0)
        for g in self.groups:
            sl = g.slices
            if force is not None:
                block = lu[g.elems].reshape(len(g.elems), -1)
                np.add.at(load, g.gidx[:, sl["u"]], block)
            if source is not None:
                np.add.at(load, g.gidx[:, sl["psi"]], lg[g.elems])
        return load

    def load_profile(self, force_profile, exactness=None):
        """Volume load vector of a time-independent body-force profile,
        integrated with an optionally boosted quadrature rule."""
        if exactness is None:
            return self.load_vector(lambda x, t: force_profile(x), None, 0.0)
        tab = reference_tables(self.layout.k, exactness)
        jac, det, v0 = self.mesh.element_jacobians()
        pts = v0[:, None, :] + tab["pts"][None] @ np.swapaxes(jac, 1, 2)
        ne, nq = pts.shape[:2]
        fv = np.asarray(force_profile(pts.reshape(-1, 2)),
                        dtype=float).reshape(ne, nq, 2)
        lu = np.einsum("e,q,eqc,qj->ecj", det, tab["w"], fv, tab["phi1"])
        load = np.zeros(self.layout.n_volume)
        for g in self.groups:
            load[g.gidx[:, g.slices["u"]].ravel()] = \
                lu[g.elems].reshape(len(g.elems), -1).ravel()
        return load

    def project_face_data(self, func, t, faces=None):
        """Face-wise L2 projections of vector data; (nf, nfb, 2) array."""
        lay = self.layout
        sel = np.arange(self.mesh.n_faces) if faces is None else faces
        pts = self.face_pts[sel].reshape(-1, 2)
        vals = np.asarray(func(pts, t), dtype=float).reshape(
            len(sel), -1, 2)
        return np.einsum("q,qm,fqc->fmc", self.fw, self.fhat, vals)

    def trace_data_vector(self, bc, t):
        """Full-trace-layout vector holding strong data on constrained
        faces (zeros elsewhere)."""
        lay = self.layout
        lam = np.zeros(lay.n_trace_full)
        nfb = lay.nfb
        u_faces = np.flatnonzero(~lay.u_free)
        if len(u_faces) and bc.u_dirichlet is not None:
            proj = self.project_face_data(bc.u_dirichlet, t, u_faces)
            for i, f in enumerate(u_faces):
                base = lay.face_offset[f]
                lam[base:base + 2 * nfb] = proj[i].T.ravel()
        p_faces = np.flatnonzero(~lay.p_free)
        if len(p_faces) and bc.p_neumann is not None:
            proj = self.project_face_data(bc.p_neumann, t, p_faces)
            for i, f in enumerate(p_faces):
                base = lay.face_offset[f] + 2 * nfb
                lam[base:base + 2 * nfb] = proj[i].T.ravel()
        return lam

    def natural_rhs_vector(self, bc, t):
        """Weak Dirichlet data for psi: <psi_D n, qhat> on free boundary
        p-trace blocks, in the full trace layout."""
        lay = self.layout
        out = np.zeros(lay.n_trace_full)
        if bc.psi_dirichlet is None:
            return out
        faces = [f for f in self.mesh.boundary_faces
                 if self.mesh.tag_flux[f] is BoundaryTag.DIRICHLET_PSI]
        if not faces:
            return out
        faces = np.asarray(faces)
        pts = self.face_pts[faces].reshape(-1, 2)
        vals = np.asarray(bc.psi_dirichlet(pts, t), dtype=float).reshape(
            len(faces), -1)
        nfb = lay.nfb
        term = np.einsum("q,qm,fq->fm", self.fw, self.fhat, vals)
        for i, f in enumerate(faces):
            base = lay.face_offset[f] + 2 * nfb
            n = self.mesh.normals[f] * self.mesh.h_face[f]
            out[base:base + nfb] += n[0] * term[i]
            out[base + nfb:base + 2 * nfb] += n[1] * term[i]
        return out

    # -- the linear solve of one midpoint system -----------------------------

    def solve_midpoint(self, yv, load, lam_data, b_tr_full):
        """Solve (2/dt M + K)(ybar, lam) = rhs for one CN step.

        Returns (ybar global volume vector, lam_bar in the full trace
        layout, with constrained slots holding the prescribed data).
        """
        lay = self.layout
        scale = 2.0 / self.dt
        r_full = b_tr_full.copy()
        wstore = []
        for g in self.groups:
            Y = yv[g.gidx]
            bv = scale * (Y @ g.mass.T) + load[g.gidx]
            bv -= lam_data[g.tidx] @ g.cpl.T
            w = bv @ g.a_inv.T
            wstore.append((g, bv, w))
            np.add.at(r_full, g.tidx.ravel(), (-(w @ g.rows.T)).ravel())
        free = lay.full_to_free >= 0
        lam_bar = lam_data.copy()
        lam_bar[free] = self.skeleton_lu.solve(r_full[free])
        ybar = np.zeros(lay.n_volume)
        for g, bv, w in wstore:
            lam_free = lam_bar[g.tidx] - lam_data[g.tidx]
            yb = w - (lam_free @ g.cpl.T) @ g.a_inv.T
            ybar[g.gidx.ravel()] = yb.ravel()
        return ybar, lam_bar

    def solve_midpoint_monolithic(self, yv, load, lam_data, b_tr_full):
        """Uncondensed sparse solve of the same step (verification path)."""
        from scipy.sparse.linalg import spsolve

        lay = self.layout
        scale = 2.0 / self.dt
        amat = self.monolithic_matrix()
        free = lay.full_to_free >= 0
        rhs = np.zeros(lay.n_volume + lay.n_skeleton)
        for g in self.groups:
            Y = yv[g.gidx]
            bv = scale * (Y @ g.mass.T) + load[g.gidx]
            bv -= lam_data[g.tidx] @ g.cpl.T
            rhs[g.gidx.ravel()] = bv.ravel()
        rhs[lay.n_volume:] = b_tr_full[free]
        sol = spsolve(amat.tocsc(), rhs)
        ybar = sol[:lay.n_volume]
        lam_bar = lam_data.copy()
        lam_bar[free] = sol[lay.n_volume:]
        return ybar, lam_bar

    def monolithic_matrix(self):
        lay = self.layout
        n = lay.n_volume + lay.n_skeleton
        rows, cols, vals = [], [], []
        for g in self.groups:
            a_loc = np.linalg.inv(g.a_inv)
            for i, e in enumerate(g.elems):
                gi = g.gidx[i]
                ti = lay.full_to_free[g.tidx[i]]
                tmask = ti >= 0
                tglob = lay.n_volume + ti[tmask]
                blocks = [(gi, gi, a_loc),
                          (gi, tglob, g.cpl[:, tmask]),
                          (tglob, gi, g.rows[tmask]),
                          (tglob, tglob, g.tmat[np.ix_(tmask, tmask)])]
                for rr, cc, bb in blocks:
                    rows.append(np.repeat(rr, len(cc)))
                    cols.append(np.tile(cc, len(rr)))
                    vals.append(np.asarray(bb).ravel())
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows),
                                    np.concatenate(cols))),
            shape=(n, n)).tocsr()

    # -- energy bookkeeping ---------------------------------------------------

    def energy(self, yv):
        """E = 1/2 (||(u,p)||_H1^2 + ||(sE,sV,psi)||_H2^2)."""
        total = 0.0
        for g in self.groups:
            Y = yv[g.gidx]
            total += 0.5 * np.einsum("ei,ij,ej->", Y, g.mass, Y)
        return total

    def dissipation(self, ybar, lam_bar):
        """Midpoint dissipation split: (beta p, p), omega (G sV, sV),
        and the two stabilization jump norms."""
        lay = self.layout
        N1, nfb = lay.N1, lay.nfb
        dp = dv = ju = jp = 0.0
        for g in self.groups:
            Y = ybar[g.gidx]
            sl = g.slices
            p = Y[:, sl["p"]]
            dp += g.beta_det * np.einsum("ei,ei->", p, p)
            if g.visc:
                V = Y[:, sl["sV"]].reshape(len(g.elems), 3, -1)
                dv += np.einsum("eca,cd,eda->", V, g.diss_v, V)
            lam = lam_bar[g.tidx].reshape(len(g.elems), 3, 4 * nfb)
            u = Y[:, sl["u"]].reshape(len(g.elems), 2, N1)
            p2 = Y[:, sl["p"]].reshape(len(g.elems), 2, N1)
            for le in range(3):
                uh = lam[:, le, :2 * nfb].reshape(-1, 2, nfb)
                ph = lam[:, le, 2 * nfb:].reshape(-1, 2, nfb)
                kap, ln = g.kappas[le], g.lens[le]
                for vol, hat, acc in ((u, uh, "u"), (p2, ph, "p")):
                    val = (np.einsum("ecj,jk,eck->", vol, g.svv[le], vol)
                           - 2.0 * np.einsum("ecj,jm,ecm->", vol, g.svf[le], hat)
                           + ln * np.einsum("ecm,ecm->", hat, hat))
                    if acc == "u":
                        ju += kap * val
                    else:
                        jp += kap * val
        return {"diss_p": dp, "diss_sv": dv, "jump_u": ju, "jump_p": jp}


@dataclass(frozen=True)
class BoundaryData:
    """Time-dependent boundary data; None means homogeneous."""

    u_dirichlet: object = None  # (x, t) -> (n, 2), strong on dirichlet_u
    p_neumann: object = None    # (x, t) -> (n, 2), strong on neumann_p
    psi_dirichlet: object = None  # (x, t) -> (n,), natural on dirichlet_psi


HOMOGENEOUS = BoundaryData()


def assemble_condensed(mesh, matfield, layout, dt, bc=HOMOGENEOUS,
                       exactness=None):
    """Group elements, build local blocks, condense, factorize skeleton."""
    if dt <= 0:
        raise AssemblyError("dt must be positive")
    k = layout.k
    exactness = exactness or scheme_exactness(k)
    tab = reference_tables(k, exactness)
    scale = 2.0 / dt

    # group elements by (material, geometry, face-sign) signature
    jac, det, v0 = mesh.element_jacobians()
    sig_map, group_elems, protos = {}, [], []
    for e in range(mesh.n_elements):
        key = (int(matfield.index[e]), jac[e].tobytes(),
               mesh.element_face_sign[e].tobytes(),
               mesh.h_face[mesh.element_faces[e]].tobytes())
        if key not in sig_map:
            sig_map[key] = len(group_elems)
            group_elems.append([])
            protos.append(e)
        group_elems[sig_map[key]].append(e)

    groups = []
    rows_all, cols_all, vals_all = [], [], []
    for gi, elems in enumerate(group_elems):
        e0 = protos[gi]
        blocks = assemble_local(e0, mesh, matfield, layout, exactness)
        nloc, ntr = blocks.nloc, blocks.ntr
        kmat = blocks.spatial()
        a_loc = scale * blocks.mass + kmat[:nloc, :nloc]
        a_inv = np.linalg.inv(a_loc)
        cpl = kmat[:nloc, nloc:]
        rmat = kmat[nloc:, :nloc]
        tmat = kmat[nloc:, nloc:]
        schur = tmat - rmat @ a_inv @ cpl

        elems = np.asarray(elems)
        gidx = layout.vol_offset[elems][:, None] + np.arange(nloc)
        tidx = np.stack([layout.elem_trace_full_idx(e) for e in elems])

        mat = matfield.of(e0)
        g = ElementGroup(
            elems=elems, nloc=nloc, visc=bool(layout.visc[e0]),
            mass=blocks.mass, a_inv=a_inv, cpl=cpl, rows=rmat, tmat=tmat,
            schur=schur, det=blocks.det, beta_det=mat.beta * blocks.det,
            diss_v=(mat.omega * blocks.det * mat.weight_g()
                    if layout.visc[e0] else None),
            svv=np.stack([fq["Svv"] for fq in blocks.face_quads]),
            svf=np.stack([fq["Svf"] for fq in blocks.face_quads]),
            lens=np.array([fq["len"] for fq in blocks.face_quads]),
            kappas=np.array([fq["kappa"] for fq in blocks.face_quads]),
            gidx=gidx, tidx=tidx, slices=layout.local_slices(e0))
        groups.append(g)

        free_t = layout.full_to_free[tidx]
        for i in range(len(elems)):
            ti = free_t[i]
            mask = ti >= 0
            tg = ti[mask]
            rows_all.append(np.repeat(tg, len(tg)))
            cols_all.append(np.tile(tg, len(tg)))
            vals_all.append(schur[np.ix_(mask, mask)].ravel())

    smat = sp.coo_matrix(
        (np.concatenate(vals_all),
         (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(layout.n_skeleton, layout.n_skeleton)).tocsc()
    lu = splu(smat)

    # shared quadrature geometry
    srule = segment_rule(exactness)
    fb = face_basis(k + 1)
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    face_pts = a[:, None, :] + srule.points[None, :, None] * (b - a)[:, None, :]

    elem_pts = v0[:, None, :] + tab["pts"][None] @ np.swapaxes(
        jac, 1, 2)

    return CondensedSystem(
        mesh=mesh, matfield=matfield, layout=layout, dt=dt, groups=groups,
        skeleton_lu=lu, skeleton_matrix=smat, factorization_count=1,
        face_pts=face_pts, fhat=fb.eval(srule.points), fw=srule.weights,
        elem_pts=elem_pts, elem_det=det, phi1=tab["phi1"],
        phi0=tab["phi0"], wq=tab["w"])


# ---------------------------------------------------------------------------
# probes (boundedness / structure diagnostics)
# ---------------------------------------------------------------------------

def assemble_global_spatial(mesh, matfield, layout, parts=("bh", "diss",
                                                           "stab"),
                            include_mass=False):
    """Sparse global operator over [volume dofs | free trace dofs] built
    from the selected per-element parts; for structural probes."""
    n = layout.n_volume + layout.n_skeleton
    rows, cols, vals = [], [], []
    for e in range(mesh.n_elements):
        blocks = assemble_local(e, mesh, matfield, layout)
        kmat = np.zeros_like(blocks.bh)
        for p in parts:
            kmat += getattr(blocks, p)
        if include_mass:
            kmat[:blocks.nloc, :blocks.nloc] += blocks.mass
        gi = layout.vol_offset[e] + np.arange(blocks.nloc)
        ti = layout.full_to_free[layout.elem_trace_full_idx(e)]
        mask = ti >= 0
        idx = np.concatenate([gi, layout.n_volume + ti[mask]])
        sel = np.concatenate([np.arange(blocks.nloc),
                              blocks.nloc + np.flatnonzero(mask)])
        sub = kmat[np.ix_(sel, sel)]
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(sub.ravel())
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n)).tocsr()


def bh_bound_probe(mesh, matfield, layout, n_samples=20, seed=0):
    """Measured sup of |B_h| / (||sigma-block||_H2 |(v,q)-block|_{UxQ})
    over random discrete fields."""
    rng = np.random.default_rng(seed)
    kb = assemble_global_spatial(mesh, matfield, layout, parts=("bh",))
    h2 = assemble_global_spatial(mesh, matfield, layout, parts=(),
                                 include_mass=True)
    semi = _uq_seminorm_matrix(mesh, matfield, layout)
    n = kb.shape[0]
    # selector masks for the two argument slots
    sig_mask = np.zeros(n, dtype=bool)
    uq_mask = np.zeros(n, dtype=bool)
    for e in range(mesh.n_elements):
        sl = layout.local_slices(e)
        off = layout.vol_offset[e]
        sig_mask[off + np.arange(sl["sE"].start, sl["psi"].stop)] = True
        uq_mask[off + np.arange(0, sl["sE"].start)] = True
    uq_mask[layout.n_volume:] = True

    worst = 0.0
    for _ in range(n_samples):
        x = rng.standard_normal(n) * uq_mask
        y = rng.standard_normal(n) * sig_mask
        bval = abs(x @ (kb @ y))
        h2n = np.sqrt(y @ (h2 @ y))
        uqn = np.sqrt(x @ (semi @ x))
        if h2n > 0 and uqn > 0:
            worst = max(worst, bval / (h2n * uqn))
    return worst


def _uq_seminorm_matrix(mesh, matfield, layout):
    """|(v, q)|^2_{U x Q} = ||eps(v)||^2 + ||div q||^2 + jump penalties."""
    k = layout.k
    tab = reference_tables(k, scheme_exactness(k))
    N1 = layout.N1
    n = layout.n_volume + layout.n_skeleton
    rows, cols, vals = [], [], []
    jac, det, _ = mesh.element_jacobians()
    for e in range(mesh.n_elements):
        inv_jt = np.linalg.inv(jac[e]).T
        gphys = tab["grad1"] @ inv_jt.T
        blocks = assemble_local(e, mesh, matfield, layout)
        sl = layout.local_slices(e)
        # eps(v):eps(v) and (div q)^2 quadratic forms on the vector blocks
        gx, gy = gphys[:, :, 0], gphys[:, :, 1]
        w = det[e] * tab["w"]
        axx = np.einsum("q,qi,qj->ij", w, gx, gx)
        ayy = np.einsum("q,qi,qj->ij", w, gy, gy)
        axy = np.einsum("q,qi,qj->ij", w, gx, gy)
        eps = np.zeros((2 * N1, 2 * N1))
        eps[:N1, :N1] = axx + 0.5 * ayy
        eps[N1:, N1:] = ayy + 0.5 * axx
        eps[:N1, N1:] = 0.5 * axy.T
        eps[N1:, :N1] = 0.5 * axy
        div = np.zeros((2 * N1, 2 * N1))
        div[:N1, :N1] = axx
        div[N1:, N1:] = ayy
        div[:N1, N1:] = axy
        div[N1:, :N1] = axy.T

        nloc = blocks.nloc
        kmat = np.zeros_like(blocks.stab)
        kmat += blocks.stab
        kmat[sl["u"], sl["u"]] += eps
        kmat[sl["p"], sl["p"]] += div

        gi = layout.vol_offset[e] + np.arange(nloc)
        ti = layout.full_to_free[layout.elem_trace_full_idx(e)]
        mask = ti >= 0
        idx = np.concatenate([gi, layout.n_volume + ti[mask]])
        sel = np.concatenate([np.arange(nloc),
                              nloc + np.flatnonzero(mask)])
        sub = kmat[np.ix_(sel, sel)]
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(sub.ravel())
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n)).tocsr()
