"""Crank-Nicolson time integration with an energy/dissipation ledger.

One step solves the midpoint system

    (2/dt) M (ybar - y^n) + K ybar = loads(t^n + dt/2),

where K collects the skew coupling, dissipation and stabilization blocks
and the face traces enter algebraically (they carry no mass), then sets
y^{n+1} = 2 ybar - y^n.  Body-force and mass-source loads enter as the
trapezoidal endpoint average (the canonical Crank-Nicolson right-hand
side); boundary data is evaluated at the midpoint, where the traces
live.  Because the energy is the quadratic form of M and the identity is
measured against the load actually applied, the step satisfies a
discrete energy identity to solver precision:

    (E^{n+1} - E^n)/dt + D(ybar, lambda_bar) = P_ext(t^n + dt/2),

with D >= 0 the sum of the physical dissipation and the stabilization
jump norms.  The ledger records every term of this identity per step.
"""

from dataclasses import dataclass, field

import numpy as np

from .assembly import HOMOGENEOUS, assemble_condensed


class SteppingError(Exception):
    pass


CHECKPOINT_VERSION = 1


@dataclass
class SystemState:
    """Volume coefficients plus the most recent midpoint traces."""

    t: float
    step: int
    yv: np.ndarray      # (n_volume,) coefficients of (u, p, sE[, sV], psi)
    lam: np.ndarray     # full-trace-layout coefficients of (uhat, phat)

    def copy(self):
        return SystemState(self.t, self.step, self.yv.copy(),
                           self.lam.copy())


@dataclass(frozen=True)
class InitialFields:
    """Pointwise-evaluable initial data; None means identically zero.

    ``u`` and ``p`` map (n, 2) points to (n, 2) values, ``sigma_e`` and
    ``sigma_v`` to (n, 3) symmetric-tensor components (11, 22, 12), and
    ``psi`` to (n,) scalars.
    """

    u: object = None
    p: object = None
    sigma_e: object = None
    sigma_v: object = None
    psi: object = None


ZERO_FIELDS = InitialFields()


@dataclass
class EnergyLedger:
    """Per-step records of the discrete energy identity."""

    t: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    diss_p: list = field(default_factory=list)
    diss_sv: list = field(default_factory=list)
    jump_u: list = field(default_factory=list)
    jump_p: list = field(default_factory=list)
    power: list = field(default_factory=list)
    identity_residual: list = field(default_factory=list)

    def append(self, t, energy, diss=None, power=0.0, residual=0.0):
        diss = diss or {"diss_p": 0.0, "diss_sv": 0.0,
                        "jump_u": 0.0, "jump_p": 0.0}
        self.t.append(t)
        self.energy.append(energy)
        self.diss_p.append(diss["diss_p"])
        self.diss_sv.append(diss["diss_sv"])
        self.jump_u.append(diss["jump_u"])
        self.jump_p.append(diss["jump_p"])
        self.power.append(power)
        self.identity_residual.append(residual)

    def __len__(self):
        return len(self.t)


def initialize(system, fields=ZERO_FIELDS, t0=0.0):
    """L2-project the initial fields element by element (volume unknowns)
    and face by face (traces); constrained trace blocks keep the
    projected data."""
    lay = system.layout
    yv = np.zeros(lay.n_volume)
    ne, nq = system.elem_pts.shape[:2]
    flat = system.elem_pts.reshape(-1, 2)

    def vol_project(func, width, phi):
        vals = np.asarray(func(flat), dtype=float).reshape(ne, nq, width)
        return np.einsum("q,eqc,qj->ecj", system.wq, vals, phi)

    cu = vol_project(fields.u, 2, system.phi1) if fields.u else None
    cp = vol_project(fields.p, 2, system.phi1) if fields.p else None
    ce = vol_project(fields.sigma_e, 3, system.phi0) if fields.sigma_e else None
    cv = vol_project(fields.sigma_v, 3, system.phi0) if fields.sigma_v else None
    cpsi = (np.einsum("q,eq,qa->ea", system.wq,
                      np.asarray(fields.psi(flat), dtype=float).reshape(ne, nq),
                      system.phi0)
            if fields.psi else None)

    for e in range(ne):
        sl = lay.local_slices(e)
        off = lay.vol_offset[e]
        if cu is not None:
            yv[off + sl["u"].start:off + sl["u"].stop] = cu[e].ravel()
        if cp is not None:
            yv[off + sl["p"].start:off + sl["p"].stop] = cp[e].ravel()
        if ce is not None:
            yv[off + sl["sE"].start:off + sl["sE"].stop] = ce[e].ravel()
        if cv is not None and "sV" in sl:
            yv[off + sl["sV"].start:off + sl["sV"].stop] = cv[e].ravel()
        if cpsi is not None:
            yv[off + sl["psi"].start:off + sl["psi"].stop] = cpsi[e]

    lam = np.zeros(lay.n_trace_full)
    nfb = lay.nfb
    for func, block in ((fields.u, 0), (fields.p, 1)):
        if func is None:
            continue
        proj = system.project_face_data(lambda x, t: func(x), t0)
        for f in range(system.mesh.n_faces):
            base = lay.face_offset[f] + 2 * nfb * block
            lam[base:base + 2 * nfb] = proj[f].T.ravel()
    return SystemState(t=t0, step=0, yv=yv, lam=lam)


def external_power(system, ybar, lam_bar, load, lam_data, b_tr_full):
    """(F, ubar) + (g, psibar) plus boundary work terms at the midpoint."""
    lay = system.layout
    free = lay.full_to_free >= 0
    p = float(load @ ybar) + float(lam_bar[free] @ b_tr_full[free])
    # work done through prescribed (constrained) trace blocks
    constrained = np.abs(lam_data).max() > 0.0
    if constrained:
        for g in system.groups:
            resid = ybar[g.gidx] @ g.rows.T + lam_bar[g.tidx] @ g.tmat.T
            p += float(np.einsum("et,et->", lam_data[g.tidx], resid))
    return p


def step(system, state, force=None, source=None, bc=HOMOGENEOUS,
         ledger=None, monolithic=False, load_fn=None):
    """Advance one Crank-Nicolson step of length system.dt and return the
    new state; appends one ledger row when a ledger is given.

    ``force``/``source`` are averaged over the step endpoints (the
    classical trapezoidal right-hand side).  ``load_fn(t_mid)`` may
    instead supply the assembled volume load for the step directly (e.g.
    a precomputed separable source); it overrides ``force``/``source``
    and is applied as given.
    """
    dt = system.dt
    t_mid = state.t + 0.5 * dt
    if load_fn is not None:
        load = load_fn(t_mid)
    elif force is None and source is None:
        load = system.load_vector(None, None, t_mid)
    else:
        key = (state.t, id(force), id(source))
        cache = getattr(system, "_load_cache", None)
        l0 = (cache[1] if cache is not None and cache[0] == key
              else system.load_vector(force, source, state.t))
        l1 = system.load_vector(force, source, state.t + dt)
        system._load_cache = ((state.t + dt, id(force), id(source)), l1)
        load = 0.5 * (l0 + l1)
    lam_data = system.trace_data_vector(bc, t_mid)
    b_tr = system.natural_rhs_vector(bc, t_mid)

    solver = (system.solve_midpoint_monolithic if monolithic
              else system.solve_midpoint)
    ybar, lam_bar = solver(state.yv, load, lam_data, b_tr)
    y_new = 2.0 * ybar - state.yv
    if not np.all(np.isfinite(y_new)):
        raise SteppingError(f"non-finite state after step {state.step + 1} "
                            f"(t = {state.t + dt:.6g})")
    new = SystemState(t=state.t + dt, step=state.step + 1, yv=y_new,
                      lam=lam_bar)

    if ledger is not None:
        e_old = system.energy(state.yv)
        e_new = system.energy(y_new)
        diss = system.dissipation(ybar, lam_bar)
        pw = external_power(system, ybar, lam_bar, load, lam_data, b_tr)
        d_tot = sum(diss.values())
        lhs = (e_new - e_old) / dt
        scale = max(abs(lhs), d_tot, abs(pw))
        resid = abs(lhs + d_tot - pw) / scale if scale > 0 else 0.0
        ledger.append(new.t, e_new, diss, pw, resid)
    return new


def run(system, state, n_steps, force=None, source=None, bc=HOMOGENEOUS,
        ledger=None, probes=(), monolithic=False, load_fn=None):
    """Take n_steps fixed steps; probes are callables probe(state) invoked
    after every step (and once on the initial state)."""
    if ledger is not None and len(ledger) == 0:
        ledger.append(state.t, system.energy(state.yv))
    for probe in probes:
        probe(state)
    for _ in range(n_steps):
        state = step(system, state, force=force, source=source, bc=bc,
                     ledger=ledger, monolithic=monolithic, load_fn=load_fn)
        for probe in probes:
            probe(state)
    return state


def save_checkpoint(path, system, state):
    np.savez(path, version=CHECKPOINT_VERSION, t=state.t, step=state.step,
             yv=state.yv, lam=state.lam, mesh_hash=system.mesh.hash(),
             k=system.layout.k, dt=system.dt)


def load_checkpoint(path, system):
    with np.load(path, allow_pickle=False) as z:
        if int(z["version"]) != CHECKPOINT_VERSION:
            raise SteppingError(f"unsupported checkpoint version "
                                f"{int(z['version'])}")
        if str(z["mesh_hash"]) != system.mesh.hash():
            raise SteppingError("checkpoint mesh does not match system mesh")
        if int(z["k"]) != system.layout.k or float(z["dt"]) != system.dt:
            raise SteppingError("checkpoint (k, dt) does not match system")
        return SystemState(t=float(z["t"]), step=int(z["step"]),
                           yv=z["yv"].copy(), lam=z["lam"].copy())
