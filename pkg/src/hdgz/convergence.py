"""Weighted error norms against the manufactured solution and automated
h / k / dt convergence studies."""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_condensed, make_layout
from .basis import triangle_rule, volume_basis
from .materials import MaterialField, preset
from .mesh import build_structured, dirichlet_u_neumann_p
from .mms import build_mms
from .stepping import EnergyLedger, initialize, run


@dataclass(frozen=True)
class ErrorReport:
    run_id: str
    preset: str
    k: int
    n: int
    h: float
    dt: float
    T: float
    err_sigma_psi: float
    err_u_p: float
    rate_sigma_psi: float = math.nan
    rate_u_p: float = math.nan


def error_norms(mesh, matfield, layout, state, mms, boost=None):
    """Weighted L2 errors at the state's time.

    Returns (err_sigma_psi, err_u_p) with the velocity/flux pair
    measured in the (rho, chi)-weighted norm and the stress/scalar block
    in the (A, omega^2 G, s)-weighted norm.  ``boost`` sets the
    quadrature exactness (default 2k + 8).
    """
    k = layout.k
    exact = boost or (2 * k + 8)
    rule = triangle_rule(exact)
    vb1, vb0 = volume_basis(k + 1), volume_basis(k)
    phi1, phi0 = vb1.eval(rule.points), vb0.eval(rule.points)
    w = rule.weights
    jac, det, v0 = mesh.element_jacobians()
    pts = v0[:, None, :] + rule.points[None] @ np.swapaxes(jac, 1, 2)
    flat = pts.reshape(-1, 2)
    t = state.t
    ne, nq = pts.shape[:2]

    ue = np.asarray(mms.u(flat, t)).reshape(ne, nq, 2)
    pe = np.asarray(mms.p(flat, t)).reshape(ne, nq, 2)
    se = np.asarray(mms.sigma_e(flat, t)).reshape(ne, nq, 3)
    ve = (np.asarray(mms.sigma_v(flat, t)).reshape(ne, nq, 3)
          if mms.sigma_v else None)
    pse = np.asarray(mms.psi(flat, t)).reshape(ne, nq)

    e1 = e2 = 0.0
    N1, N0 = layout.N1, layout.N0
    for e in range(ne):
        sl = layout.local_slices(e)
        off = layout.vol_offset[e]
        y = state.yv[off:off + layout.nloc[e]]
        mat = matfield.of(e)
        dq = ue[e] - phi1 @ y[sl["u"]].reshape(2, N1).T
        rq = pe[e] - phi1 @ y[sl["p"]].reshape(2, N1).T
        e1 += det[e] * (mat.rho * np.einsum("q,qc,qc->", w, dq, dq)
                        + mat.chi * np.einsum("q,qc,qc->", w, rq, rq))
        sq = se[e] - phi0 @ y[sl["sE"]].reshape(3, N0).T
        wa = mat.weight_a()
        e2 += det[e] * np.einsum("q,qa,ab,qb->", w, sq, wa, sq)
        if "sV" in sl:
            vq = (ve[e] if ve is not None else 0.0) \
                - phi0 @ y[sl["sV"]].reshape(3, N0).T
            wg = mat.omega ** 2 * mat.weight_g()
            e2 += det[e] * np.einsum("q,qa,ab,qb->", w, vq, wg, vq)
        pq = pse[e] - phi0 @ y[sl["psi"]]
        e2 += det[e] * mat.s * np.einsum("q,q,q->", w, pq, pq)
    return math.sqrt(e2), math.sqrt(e1)


def mms_run(preset_name, k, n, dt, T, diagonal="right", boost=None):
    """One manufactured-solution cell: build, integrate to T, measure."""
    mesh = build_structured((0.0, 0.0, 1.0, 1.0), n,
                            diagonal=diagonal,
                            tag_rule=dirichlet_u_neumann_p)
    mat = preset(preset_name)
    mf = MaterialField.uniform(mat, mesh)
    layout = make_layout(mesh, mf, k)
    mms = build_mms(mf)
    n_steps = max(1, round(T / dt))
    dt_eff = T / n_steps
    system = assemble_condensed(mesh, mf, layout, dt_eff)
    state = initialize(system, mms.initial_fields)
    state = run(system, state, n_steps, force=mms.force, source=mms.source,
                bc=mms.boundary)
    esp, eup = error_norms(mesh, mf, layout, state, mms, boost=boost)
    return ErrorReport(
        run_id=f"{preset_name}-k{k}-n{n}-dt{dt_eff:.3e}", preset=preset_name,
        k=k, n=n, h=1.0 / n, dt=dt_eff, T=T,
        err_sigma_psi=esp, err_u_p=eup)


def dt_policy(h, k):
    """Time step for mesh-refinement studies: dt = h^{(k+2)/2} / 4.

    The exponent matches the best spatial rate O(h^{k+2}) of the (u, p)
    error, so dt^2 is the *same* order; the safety factor pushes its
    constant far enough down that measured spatial rates are clean.
    """
    return 0.25 * h ** ((k + 2) / 2.0)


def _with_rates(rows, xs):
    """Attach pairwise observed rates: log(e_i/e_{i+1}) / log(x_i/x_{i+1})."""
    out = [rows[0]]
    for prev, cur, x0, x1 in zip(rows, rows[1:], xs, xs[1:]):
        den = math.log(x0 / x1)
        r1 = (math.log(prev.err_sigma_psi / cur.err_sigma_psi) / den
              if min(prev.err_sigma_psi, cur.err_sigma_psi) > 1e-14
              else math.nan)
        r2 = (math.log(prev.err_u_p / cur.err_u_p) / den
              if min(prev.err_u_p, cur.err_u_p) > 1e-14 else math.nan)
        out.append(ErrorReport(**{**cur.__dict__, "rate_sigma_psi": r1,
                                  "rate_u_p": r2}))
    return out


@dataclass
class StudyResult:
    rows: list
    fitted_rate_sigma_psi: float = math.nan
    fitted_rate_u_p: float = math.nan
    failures: list = field(default_factory=list)


def convergence_study(kind, preset_name="l1", k=1, meshes=(4, 8, 16, 32),
                      degrees=(1, 2, 3, 4, 5), dts=None, dt=None, T=0.5,
                      diagonal="alternating", boost=None):
    """Run one sweep and fit rates.

    kind "h": refine meshes at fixed k with dt = h^{(k+2)/2}; the fitted
    rate is taken from the final mesh pair.  kind "k": raise the degree
    at fixed n = meshes[0]; no rate, callers inspect monotone decay.
    kind "dt": fixed mesh/degree, rate fitted by least squares over all
    time steps.
    """
    rows, failures = [], []

    def attempt(fn, label):
        try:
            rows.append(fn())
        except Exception as exc:  # record and continue per-cell
            failures.append((label, repr(exc)))

    if kind == "h":
        for n in meshes:
            attempt(lambda n=n: mms_run(preset_name, k, n,
                                        dt or dt_policy(1.0 / n, k), T,
                                        diagonal=diagonal, boost=boost),
                    f"n={n}")
        rows = _with_rates(rows, [r.h for r in rows])
        res = StudyResult(rows, failures=failures)
        if len(rows) >= 2:
            res.fitted_rate_sigma_psi = rows[-1].rate_sigma_psi
            res.fitted_rate_u_p = rows[-1].rate_u_p
        return res

    if kind == "k":
        n = meshes[0] if np.iterable(meshes) else meshes
        for kk in degrees:
            attempt(lambda kk=kk: mms_run(preset_name, kk, n,
                                          dt or 1e-4, T,
                                          diagonal=diagonal, boost=boost),
                    f"k={kk}")
        return StudyResult(rows, failures=failures)

    if kind == "dt":
        dts = dts or (1 / 40, 1 / 80, 1 / 160, 1 / 320)
        n = meshes[0] if np.iterable(meshes) else meshes
        for dtv in dts:
            attempt(lambda dtv=dtv: mms_run(preset_name, k, n, dtv, T,
                                            diagonal=diagonal, boost=boost),
                    f"dt={dtv}")
        rows = _with_rates(rows, [r.dt for r in rows])
        res = StudyResult(rows, failures=failures)
        if len(rows) >= 2:
            x = np.log([r.dt for r in rows])
            res.fitted_rate_sigma_psi = float(np.polyfit(
                x, np.log([r.err_sigma_psi for r in rows]), 1)[0])
            res.fitted_rate_u_p = float(np.polyfit(
                x, np.log([r.err_u_p for r in rows]), 1)[0])
        return res

    raise ValueError(f"unknown study kind {kind!r}")


CSV_COLUMNS = ("run_id", "preset", "k", "n", "h", "dt", "T",
               "err_sigma_psi", "err_u_p", "rate_sigma_psi", "rate_u_p")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def write_csv(rows, path_or_file):
    """Write ErrorReport rows with 12-significant-digit floats."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file,
                                                            "__fspath__")
    f = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    finally:
        if own:
            f.close()


def csv_text(rows):
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()
