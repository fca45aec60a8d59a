"""Manufactured solution with closed-form fields and derived sources.

The scalar field is psi = sin(pi x) sin(pi y) cos(2 pi t) and the
velocity is u = (2 pi y sin(pi x) cos(pi y), 2 pi x cos(pi x) sin(pi y))
cos(2 pi t); both vanish on the boundary of the unit square.  The
remaining fields are the particular solutions of the constitutive
equations that start from sigma_E(0) = 0:

    sigma_E = C eps(U) sin(2 pi t) / (2 pi),
    sigma_V = (D - C) eps(U) (cos(2 pi t) + 2 pi w sin(2 pi t))
              / (1 + (2 pi w)^2),
    p       = -grad(Psi) (beta cos(2 pi t) + 2 pi chi sin(2 pi t))
              / (beta^2 + (2 pi chi)^2),

so that sigma_E' = C eps(u), w sigma_V' + sigma_V = (D - C) eps(u) and
chi p' + beta p = -grad(psi) hold identically.  The body force and mass
source follow from the two balance laws,

    F = rho u' - div(sigma_E + w sigma_V - alpha psi I),
    g = s psi' + div p + alpha div u.

All spatial/temporal derivatives are produced symbolically and compiled
to numpy; the constitutive residuals are exposed for direct testing.
"""

from dataclasses import dataclass

import numpy as np
import sympy as sym

from .assembly import BoundaryData
from .stepping import InitialFields


class MmsError(Exception):
    pass


def _lamb(expr, xs, ys, ts):
    f = sym.lambdify((xs, ys, ts), expr, modules="numpy")

    def wrapped(x, y, t):
        return np.broadcast_to(np.asarray(f(x, y, t), dtype=float), x.shape)

    return wrapped


def _vec(fx, fy):
    def wrapped(pts, t):
        x, y = pts[:, 0], pts[:, 1]
        return np.stack([fx(x, y, t), fy(x, y, t)], axis=1)
    return wrapped


def _ten(f11, f22, f12):
    def wrapped(pts, t):
        x, y = pts[:, 0], pts[:, 1]
        return np.stack([f11(x, y, t), f22(x, y, t), f12(x, y, t)], axis=1)
    return wrapped


def _sca(f):
    def wrapped(pts, t):
        x, y = pts[:, 0], pts[:, 1]
        return f(x, y, t)
    return wrapped


@dataclass(frozen=True)
class MmsSolution:
    """Exact fields, sources and matching boundary/initial data."""

    material: object
    u: object           # (pts, t) -> (n, 2)
    p: object
    sigma_e: object     # (pts, t) -> (n, 3) components (11, 22, 12)
    sigma_v: object     # None when omega = 0
    psi: object         # (pts, t) -> (n,)
    force: object
    source: object
    residual_funcs: tuple   # (residual, driving term) pairs of callables

    @property
    def boundary(self):
        return BoundaryData(u_dirichlet=self.u, p_neumann=self.p,
                            psi_dirichlet=self.psi)

    @property
    def initial_fields(self):
        at0 = lambda f: (lambda pts: f(pts, 0.0))
        return InitialFields(
            u=at0(self.u), p=at0(self.p), sigma_e=at0(self.sigma_e),
            sigma_v=at0(self.sigma_v) if self.sigma_v else None,
            psi=at0(self.psi))

    def max_residual(self, pts, times):
        """Largest constitutive residual, relative to the magnitude of the
        corresponding driving term (floored at 1)."""
        worst = 0.0
        for res, ref in self.residual_funcs:
            scale = 1.0
            for t in np.atleast_1d(times):
                scale = max(scale, float(np.abs(ref(pts, t)).max()))
            for t in np.atleast_1d(times):
                worst = max(worst, float(np.abs(res(pts, t)).max()) / scale)
        return worst


def build_mms(matfield):
    """Derive the full manufactured data set for a uniform material."""
    if len(matfield.materials) != 1:
        raise MmsError("manufactured solution requires a uniform material")
    m = matfield.materials[0]
    xs, ys, ts = sym.symbols("x y t", real=True)
    pi = sym.pi
    theta = 2 * pi * ts
    ct, st = sym.cos(theta), sym.sin(theta)

    Psi = sym.sin(pi * xs) * sym.sin(pi * ys)
    Ux = 2 * pi * ys * sym.sin(pi * xs) * sym.cos(pi * ys)
    Uy = 2 * pi * xs * sym.cos(pi * xs) * sym.sin(pi * ys)

    e11 = sym.diff(Ux, xs)
    e22 = sym.diff(Uy, ys)
    e12 = (sym.diff(Ux, ys) + sym.diff(Uy, xs)) / 2

    def iso(mu, lam):
        tr = e11 + e22
        return (2 * mu * e11 + lam * tr, 2 * mu * e22 + lam * tr,
                2 * mu * e12)

    ce = iso(m.mu_c, m.lam_c)
    w = sym.Rational(0) if m.omega == 0 else sym.Float(m.omega, 30)

    psi = Psi * ct
    u = (Ux * ct, Uy * ct)
    fac_e = st / (2 * pi)
    sig_e = tuple(c * fac_e for c in ce)

    if m.omega > 0:
        de = iso(m.mu_d, m.lam_d)
        dc = tuple(d - c for d, c in zip(de, ce))
        fac_v = (ct + 2 * pi * w * st) / (1 + (2 * pi * w) ** 2)
        sig_v = tuple(c * fac_v for c in dc)
    else:
        sig_v = (sym.S.Zero,) * 3

    beta, chi = sym.Float(m.beta, 30), sym.Float(m.chi, 30)
    fac_p = (beta * ct + 2 * pi * chi * st) / (beta ** 2 + (2 * pi * chi) ** 2)
    p = (-sym.diff(Psi, xs) * fac_p, -sym.diff(Psi, ys) * fac_p)

    # total stress and balance-law sources
    s11 = sig_e[0] + w * sig_v[0] - m.alpha * psi
    s22 = sig_e[1] + w * sig_v[1] - m.alpha * psi
    s12 = sig_e[2] + w * sig_v[2]
    force = (m.rho * sym.diff(u[0], ts)
             - sym.diff(s11, xs) - sym.diff(s12, ys),
             m.rho * sym.diff(u[1], ts)
             - sym.diff(s12, xs) - sym.diff(s22, ys))
    div_u = sym.diff(u[0], xs) + sym.diff(u[1], ys)
    div_p = sym.diff(p[0], xs) + sym.diff(p[1], ys)
    source = m.s * sym.diff(psi, ts) + div_p + m.alpha * div_u

    # constitutive residuals paired with their driving terms
    res = [(sym.diff(se, ts) - c * ct, c * ct) for se, c in zip(sig_e, ce)]
    if m.omega > 0:
        res += [(w * sym.diff(sv, ts) + sv - d * ct, d * ct)
                for sv, d in zip(sig_v, dc)]
    res += [(chi * sym.diff(p[0], ts) + beta * p[0] + sym.diff(psi, xs),
             sym.diff(psi, xs)),
            (chi * sym.diff(p[1], ts) + beta * p[1] + sym.diff(psi, ys),
             sym.diff(psi, ys))]

    L = lambda e: _lamb(e, xs, ys, ts)
    return MmsSolution(
        material=m,
        u=_vec(L(u[0]), L(u[1])),
        p=_vec(L(p[0]), L(p[1])),
        sigma_e=_ten(L(sig_e[0]), L(sig_e[1]), L(sig_e[2])),
        sigma_v=(_ten(L(sig_v[0]), L(sig_v[1]), L(sig_v[2]))
                 if m.omega > 0 else None),
        psi=_sca(L(psi)),
        force=_vec(L(force[0]), L(force[1])),
        source=_sca(L(source)),
        residual_funcs=tuple((_sca(L(r)), _sca(L(ref))) for r, ref in res))
