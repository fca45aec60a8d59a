import numpy as np
import pytest

from hdgz import mesh as hmesh
from hdgz.assembly import (AssemblyError, assemble_condensed,
                           assemble_global_spatial, assemble_local,
                           bh_bound_probe, make_layout, reference_tables,
                           scheme_exactness)
from hdgz.basis import volume_basis
from hdgz.materials import (MaterialField, apply_isotropic_inverse, preset)

from conftest import unit_square


def layout_for(n=1, k=1, preset_name="l1", tag_rule=hmesh.all_dirichlet):
    mesh = unit_square(n, tag_rule=tag_rule)
    mf = MaterialField.uniform(preset(preset_name), mesh)
    return mesh, mf, make_layout(mesh, mf, k)


# -- layout ---------------------------------------------------------------------

def test_block_sizes_match_formulas():
    for k in (0, 1, 3):
        _, _, lay = layout_for(k=k)
        assert 2 * lay.N1 == (k + 2) * (k + 3)       # u and p blocks
        assert 3 * lay.N0 == 3 * (k + 1) * (k + 2) // 2  # stress blocks
        assert lay.nfb == k + 2                      # face modes per component
        assert lay.block == 4 * lay.nfb              # u_hat + p_hat per face


def test_skeleton_dimension_n1_k1():
    # all-Dirichlet-u boundary, p_hat free everywhere: u_hat lives on the
    # single interior face (6 dofs), p_hat on all 5 faces (30 dofs)
    _, _, lay = layout_for(n=1, k=1)
    assert lay.n_skeleton == 36


def test_offsets_contiguous_nonoverlapping():
    mesh, _, lay = layout_for(n=2, k=1)
    seen = np.sort(lay.full_to_free[lay.full_to_free >= 0])
    assert np.array_equal(seen, np.arange(lay.n_skeleton))
    assert lay.vol_offset[-1] + lay.nloc[-1] == lay.n_volume


def test_sigma_v_absent_on_elastic_elements():
    mesh = unit_square(2)
    mf = MaterialField.uniform(preset("l3"), mesh)  # omega = 0
    lay = make_layout(mesh, mf, 1)
    assert not lay.visc.any()
    assert "sV" not in lay.local_slices(0)
    mixed = MaterialField.from_rule(
        lambda c: preset("l1") if c[0] < 0.5 else preset("l3"), mesh)
    lay2 = make_layout(mesh, mixed, 1)
    assert lay2.visc.any() and not lay2.visc.all()


# -- local blocks ----------------------------------------------------------------

def test_masses_spd_dissipation_stab_psd():
    mesh, mf, lay = layout_for(n=1, k=1)
    blocks = assemble_local(0, mesh, mf, lay)
    assert np.min(np.linalg.eigvalsh(blocks.mass)) > 0
    for part in (blocks.diss, blocks.stab):
        assert np.max(np.abs(part - part.T)) < 1e-14
        assert np.min(np.linalg.eigvalsh(part)) > -1e-12


def matched_trace_vector(e, mesh, lay, y_vol, tab):
    """Full local vector with u_hat, p_hat set to exact face traces."""
    sl = lay.local_slices(e)
    nloc = int(lay.nloc[e])
    y = np.zeros(nloc + 3 * lay.block)
    y[:nloc] = y_vol
    fw, fhat, nfb, N1 = tab["fw"], tab["fhat"], lay.nfb, lay.N1
    for le in range(3):
        sign = mesh.element_face_sign[e][le]
        tr1 = tab[("tr1", le, sign)]
        off = nloc + le * lay.block
        for field, base in (("u", off), ("p", off + 2 * nfb)):
            c = y_vol[sl[field]].reshape(2, N1)
            for comp in range(2):
                vals = tr1 @ c[comp]
                y[base + comp * nfb:base + (comp + 1) * nfb] = np.einsum(
                    "q,qm,q->m", fw, fhat, vals)
    return y


def test_stabilization_kernel_is_jump_free():
    mesh, mf, lay = layout_for(n=1, k=2)
    tab = reference_tables(2, scheme_exactness(2))
    blocks = assemble_local(0, mesh, mf, lay)
    rng = np.random.default_rng(3)
    y = matched_trace_vector(0, mesh, lay, rng.standard_normal(blocks.nloc),
                             tab)
    out = blocks.stab @ y
    assert np.max(np.abs(out)) < 1e-12 * max(1.0, np.max(np.abs(y)))


def green_formula_gap():
    # with zero trace dofs, B_h((v,q),(tau,phi)) must equal the integrated-
    # by-parts form -(div tau_tot, v) + (grad phi, q) for polynomial fields;
    # returns the worst relative gap over random fields on every element
    mesh, mf, lay = layout_for(n=1, k=2)
    mat = mf.of(0)
    tab = reference_tables(2, scheme_exactness(2))
    rng = np.random.default_rng(11)
    worst = 0.0
    for e in range(mesh.n_elements):
        blocks = assemble_local(e, mesh, mf, lay)
        sl = lay.local_slices(e)
        n = blocks.nloc + blocks.ntr
        y_uq = np.zeros(n)
        y_sig = np.zeros(n)
        y_uq[sl["u"]] = rng.standard_normal(2 * lay.N1)
        y_uq[sl["p"]] = rng.standard_normal(2 * lay.N1)
        y_sig[sl["sE"]] = rng.standard_normal(3 * lay.N0)
        y_sig[sl["sV"]] = rng.standard_normal(3 * lay.N0)
        y_sig[sl["psi"]] = rng.standard_normal(lay.N0)
        lhs = y_uq @ blocks.bh @ y_sig

        # quadrature of the Green form with analytic basis derivatives
        verts = mesh.vertices[mesh.elements[e]]
        jac = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
        inv_jt = np.linalg.inv(jac).T
        det = blocks.det
        vb0 = volume_basis(lay.k)
        phi0 = tab["phi0"]
        g0 = vb0.grad(tab["pts"]) @ inv_jt.T          # (nq, N0, 2)
        phi1 = tab["phi1"]

        def tensor_at_q(coeff):
            c = coeff.reshape(3, lay.N0)
            return [phi0 @ ci for ci in c]            # t11, t22, t12

        te = tensor_at_q(y_sig[sl["sE"]])
        tv = tensor_at_q(y_sig[sl["sV"]])
        psi = phi0 @ y_sig[sl["psi"]]
        gpsi = np.einsum("qad,a->qd", g0, y_sig[sl["psi"]])

        def dcomp(coeff_slice, comp, d):
            c = y_sig[coeff_slice].reshape(3, lay.N0)
            return g0[:, :, d] @ c[comp]

        # div tau_tot, component-wise; tau_tot = tE + w tV - alpha psi I
        w = mat.omega
        div1 = (dcomp(sl["sE"], 0, 0) + w * dcomp(sl["sV"], 0, 0)
                + dcomp(sl["sE"], 2, 1) + w * dcomp(sl["sV"], 2, 1)
                - mat.alpha * gpsi[:, 0])
        div2 = (dcomp(sl["sE"], 2, 0) + w * dcomp(sl["sV"], 2, 0)
                + dcomp(sl["sE"], 1, 1) + w * dcomp(sl["sV"], 1, 1)
                - mat.alpha * gpsi[:, 1])

        u = y_uq[sl["u"]].reshape(2, lay.N1)
        p = y_uq[sl["p"]].reshape(2, lay.N1)
        v1, v2 = phi1 @ u[0], phi1 @ u[1]
        q1, q2 = phi1 @ p[0], phi1 @ p[1]
        rhs = det * np.sum(tab["w"] * (-(div1 * v1 + div2 * v2)
                                       + gpsi[:, 0] * q1 + gpsi[:, 1] * q2))
        scale = max(1.0, abs(lhs), abs(rhs))
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def test_green_formula_consistency():
    assert green_formula_gap() <= 1e-12


def test_bh_matched_traces_reduces_to_volume_form():
    mesh, mf, lay = layout_for(n=1, k=1)
    mat = mf.of(0)
    tab = reference_tables(1, scheme_exactness(1))
    blocks = assemble_local(0, mesh, mf, lay)
    rng = np.random.default_rng(5)
    sl = lay.local_slices(0)
    n = blocks.nloc + blocks.ntr
    y_vol = rng.standard_normal(blocks.nloc)
    y_uq = np.zeros(n)
    y_uq[:blocks.nloc] = y_vol
    y_uq[sl["sE"]] = 0.0
    y_uq[sl["sV"]] = 0.0
    y_uq[sl["psi"]] = 0.0
    y_uq = matched_trace_vector(0, mesh, lay, y_uq[:blocks.nloc], tab)
    y_sig = np.zeros(n)
    y_sig[sl["sE"]] = rng.standard_normal(3 * lay.N0)
    y_sig[sl["sV"]] = rng.standard_normal(3 * lay.N0)
    y_sig[sl["psi"]] = rng.standard_normal(lay.N0)
    lhs = y_uq @ blocks.bh @ y_sig

    # direct quadrature of (tau_tot, eps v) - (phi, div q)
    verts = mesh.vertices[mesh.elements[0]]
    jac = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
    inv_jt = np.linalg.inv(jac).T
    g1 = volume_basis(lay.k + 1).grad(tab["pts"]) @ inv_jt.T
    phi0 = tab["phi0"]
    u = y_uq[sl["u"]].reshape(2, lay.N1)
    p = y_uq[sl["p"]].reshape(2, lay.N1)
    gu = np.einsum("qjd,cj->qcd", g1, u)
    gp = np.einsum("qjd,cj->qcd", g1, p)
    eps11, eps22 = gu[:, 0, 0], gu[:, 1, 1]
    eps12 = 0.5 * (gu[:, 0, 1] + gu[:, 1, 0])
    c = y_sig[sl["sE"]].reshape(3, lay.N0)
    cv = y_sig[sl["sV"]].reshape(3, lay.N0)
    t11 = phi0 @ (c[0] + mat.omega * cv[0])
    t22 = phi0 @ (c[1] + mat.omega * cv[1])
    t12 = phi0 @ (c[2] + mat.omega * cv[2])
    psi = phi0 @ y_sig[sl["psi"]]
    t11 -= mat.alpha * psi
    t22 -= mat.alpha * psi
    integrand = (t11 * eps11 + t22 * eps22 + 2.0 * t12 * eps12
                 - psi * (gp[:, 0, 0] + gp[:, 1, 1]))
    rhs = blocks.det * np.sum(tab["w"] * integrand)
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_k0_viscous_mass_against_quadrature_oracle():
    mesh, mf, lay = layout_for(n=1, k=0)
    mat = mf.of(0)
    blocks = assemble_local(0, mesh, mf, lay)
    sl = lay.local_slices(0)
    msv = blocks.mass[sl["sV"], sl["sV"]]
    # oracle: 2x2 tensor action integrated over the physical element
    # basis tensors in the (11, 22, 12) vector representation
    base = [np.array([[1.0, 0.0], [0.0, 0.0]]),
            np.array([[0.0, 0.0], [0.0, 1.0]]),
            np.array([[0.0, 1.0], [1.0, 0.0]])]
    phi0 = np.sqrt(2.0)  # orthonormal constant on the reference triangle
    dmu, dlam = mat.mu_d - mat.mu_c, mat.lam_d - mat.lam_c
    oracle = np.zeros((3, 3))
    for i, ti in enumerate(base):
        for j, tj in enumerate(base):
            gt = apply_isotropic_inverse(tj, dmu, dlam)
            oracle[i, j] = (mat.omega ** 2 * blocks.det * 0.5
                            * phi0 ** 2 * np.sum(gt * ti))
    assert np.max(np.abs(msv - oracle)) < 1e-12 * np.max(np.abs(oracle))


def test_blocks_exact_under_quadrature_boost():
    mesh, mf, lay = layout_for(n=1, k=2)
    a = assemble_local(1, mesh, mf, lay)
    b = assemble_local(1, mesh, mf, lay, exactness=scheme_exactness(2) + 7)
    for pa, pb in ((a.mass, b.mass), (a.bh, b.bh), (a.diss, b.diss),
                   (a.stab, b.stab)):
        assert np.max(np.abs(pa - pb)) <= 1e-12 * max(1.0, np.max(np.abs(pa)))


def test_degenerate_element_rejected():
    mesh = unit_square(1)
    bad = hmesh.Mesh(**{**mesh.__dict__,
                        "vertices": mesh.vertices * np.array([1.0, 0.0])})
    mf = MaterialField.uniform(preset("l1"), bad)
    lay = make_layout(bad, mf, 1)
    with pytest.raises(AssemblyError):
        assemble_local(0, bad, mf, lay)


# -- global structure -------------------------------------------------------------

def test_bh_global_skew():
    mesh, mf, lay = layout_for(n=2, k=1)
    kb = assemble_global_spatial(mesh, mf, lay, parts=("bh",))
    asym = (kb + kb.T).toarray()
    assert np.max(np.abs(asym)) < 1e-12 * max(1.0, abs(kb).max())


def test_step_operator_monotone_part_psd():
    # symmetric part of the spatial operator (dissipation + stabilization;
    # B_h is skew) must be PSD on the n=1 mesh
    mesh, mf, lay = layout_for(n=1, k=1)
    kmat = assemble_global_spatial(mesh, mf, lay).toarray()
    sym = 0.5 * (kmat + kmat.T)
    assert np.min(np.linalg.eigvalsh(sym)) > -1e-10 * np.max(np.abs(sym))


def test_zero_fields_give_zero_bh():
    mesh, mf, lay = layout_for(n=1, k=1)
    kb = assemble_global_spatial(mesh, mf, lay, parts=("bh",))
    assert np.max(np.abs(kb @ np.zeros(kb.shape[0]))) == 0.0


def test_bh_bound_ratio_stable_under_refinement():
    ratios = []
    for n in (1, 2, 4):
        mesh, mf, lay = layout_for(n=n, k=1)
        ratios.append(bh_bound_probe(mesh, mf, lay))
    assert all(np.isfinite(r) and r > 0 for r in ratios)
    # boundedness: no growth under refinement (random sampling may
    # under-resolve the sup on finer meshes, so only an upper bound holds)
    assert max(ratios) <= 1.5 * ratios[0]


def test_bh_bound_ratio_stable_in_k():
    ratios = []
    for k in range(5):
        mesh, mf, lay = layout_for(n=2, k=k)
        ratios.append(bh_bound_probe(mesh, mf, lay))
    assert all(np.isfinite(r) and r > 0 for r in ratios)
    assert max(ratios) < 3.0 * min(ratios)


def test_assemble_condensed_rejects_bad_dt():
    mesh, mf, lay = layout_for(n=1, k=1)
    with pytest.raises(AssemblyError):
        assemble_condensed(mesh, mf, lay, 0.0)
