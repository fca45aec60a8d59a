"""Physical coefficients: isotropic stiffness tensors and named presets.

The solid follows a Zener rheology with elastic stiffness C and
long/short-time pair D; both are isotropic fourth-order tensors acting
on 2x2 symmetric matrices, C tau = 2 mu tau + lambda tr(tau) I.  The
compliances A = C^-1 and G = (D - C)^-1 have the same isotropic form
with inverted coefficients.  omega = 0 marks a purely elastic element:
the viscous stress is dropped from the state there and G is undefined.
"""

from dataclasses import dataclass, replace

import numpy as np


class MaterialError(Exception):
    pass


def apply_isotropic(tau, mu, lam):
    """2 mu tau + lam tr(tau) I for symmetric 2x2 tau (batched ok)."""
    tau = np.asarray(tau, dtype=float)
    tr = tau[..., 0, 0] + tau[..., 1, 1]
    out = 2.0 * mu * tau
    out[..., 0, 0] += lam * tr
    out[..., 1, 1] += lam * tr
    return out


def apply_isotropic_inverse(tau, mu, lam):
    """Closed-form inverse of apply_isotropic in d = 2.

    (2 mu + d lam) scales the trace part, 2 mu the deviatoric part:
    inv(tau) = tau/(2 mu) - lam/(2 mu (2 mu + 2 lam)) tr(tau) I.
    """
    tau = np.asarray(tau, dtype=float)
    tr = tau[..., 0, 0] + tau[..., 1, 1]
    c = lam / (2.0 * mu * (2.0 * mu + 2.0 * lam))
    out = tau / (2.0 * mu)
    out[..., 0, 0] -= c * tr
    out[..., 1, 1] -= c * tr
    return out


def isotropic_weight_matrix(mu, lam, inverse=False):
    """3x3 matrix W with tau:(Op sigma) = tau3^T W sigma3.

    Components are ordered (11, 22, 12); the Frobenius metric
    diag(1, 1, 2) is absorbed, so W is symmetric.  ``inverse`` selects
    the compliance of the (mu, lam) stiffness.
    """
    if inverse:
        c = lam / (2.0 * mu * (2.0 * mu + 2.0 * lam))
        a, b, d = 1.0 / (2.0 * mu) - c, -c, 1.0 / mu
    else:
        a, b, d = 2.0 * mu + lam, lam, 4.0 * mu
    return np.array([[a, b, 0.0], [b, a, 0.0], [0.0, 0.0, d]])


def lame_from_young_poisson(E, nu):
    """(mu, lambda) from Young's modulus and Poisson ratio."""
    if E <= 0:
        raise MaterialError("Young's modulus must be positive")
    if not -1.0 < nu < 0.5:
        raise MaterialError("Poisson ratio must lie in (-1, 1/2)")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return mu, lam


@dataclass(frozen=True)
class Material:
    """Coefficient record for one (sub)domain; all constants."""

    rho: float      # solid / composite density
    chi: float      # fluid or thermal inertia
    s: float        # storage / dilatation coefficient
    alpha: float    # coupling coefficient
    beta: float     # dissipation (viscosity/permeability or 1/conductivity)
    omega: float    # relaxation time, >= 0; 0 means purely elastic
    mu_c: float
    lam_c: float
    mu_d: float = 0.0
    lam_d: float = 0.0

    def __post_init__(self):
        for name in ("rho", "chi", "s", "beta", "alpha", "mu_c", "lam_c"):
            if getattr(self, name) <= 0:
                raise MaterialError(f"{name} must be positive")
        if self.omega < 0:
            raise MaterialError("omega must be >= 0")
        if self.omega > 0 and not (self.mu_d > self.mu_c
                                   and self.lam_d > self.lam_c):
            raise MaterialError(
                "viscoelastic element needs mu_d > mu_c and lam_d > lam_c")

    @property
    def viscoelastic(self):
        return self.omega > 0

    def apply_c(self, tau):
        return apply_isotropic(tau, self.mu_c, self.lam_c)

    def apply_d(self, tau):
        return apply_isotropic(tau, self.mu_d, self.lam_d)

    def apply_a(self, tau):
        return apply_isotropic_inverse(tau, self.mu_c, self.lam_c)

    def apply_g(self, tau):
        if not self.viscoelastic:
            raise MaterialError("G is undefined on a purely elastic element")
        return apply_isotropic_inverse(tau, self.mu_d - self.mu_c,
                                       self.lam_d - self.lam_c)

    def weight_a(self):
        return isotropic_weight_matrix(self.mu_c, self.lam_c, inverse=True)

    def weight_g(self):
        if not self.viscoelastic:
            raise MaterialError("G is undefined on a purely elastic element")
        return isotropic_weight_matrix(self.mu_d - self.mu_c,
                                       self.lam_d - self.lam_c, inverse=True)

    def with_omega(self, omega):
        return replace(self, omega=omega)

    def p_speed(self):
        """Fastest compressional speed; unrelaxed (D) pair when omega > 0."""
        if self.viscoelastic:
            mu, lam = self.mu_d, self.lam_d
        else:
            mu, lam = self.mu_c, self.lam_c
        return np.sqrt((lam + 2.0 * mu) / self.rho)


def builtin_parameter_sets():
    """Named presets for the reported experiments."""
    l1 = Material(rho=1.0, chi=1.0, s=1.0, alpha=1.0, beta=1.0, omega=1.0,
                  mu_c=10.0, lam_c=30.0, mu_d=20.0, lam_d=40.0)

    mu_c2, lam_c2 = lame_from_young_poisson(100.0, 0.49)
    mu_d2, lam_d2 = lame_from_young_poisson(1000.0, 0.4999)
    l2 = Material(rho=1.0, chi=1.0, s=1e-6, alpha=1.0, beta=1.0, omega=1.0,
                  mu_c=mu_c2, lam_c=lam_c2, mu_d=mu_d2, lam_d=lam_d2)

    theta = 10.5
    l3 = Material(rho=2650.0, chi=1.49e-8 / theta, s=117.0, alpha=79200.0,
                  beta=1.0 / theta, omega=0.0, mu_c=6e9, lam_c=4e9)

    phi = 0.1
    rho_f, rho_s = 1025.0, 2650.0
    l4 = Material(rho=phi * rho_f + (1.0 - phi) * rho_s, chi=rho_f / phi,
                  s=1e-9, alpha=1.0, beta=1e-3 / 1e-14, omega=0.0,
                  mu_c=1e9, lam_c=4e8, mu_d=4e9, lam_d=7e9)

    return {"l1": l1, "l2": l2, "l3": l3, "l4": l4}


def preset(name):
    sets = builtin_parameter_sets()
    try:
        return sets[name.lower()]
    except KeyError:
        raise MaterialError(f"unknown preset {name!r}; have {sorted(sets)}")


@dataclass(frozen=True)
class MaterialField:
    """Per-element material assignment (piecewise constant)."""

    materials: tuple            # distinct Material records
    index: np.ndarray           # (ne,) index into materials

    @classmethod
    def uniform(cls, material, mesh):
        return cls((material,), np.zeros(mesh.n_elements, dtype=int))

    @classmethod
    def from_rule(cls, rule, mesh):
        """``rule`` maps an element centroid to a Material."""
        mats, idx_of = [], {}
        index = np.zeros(mesh.n_elements, dtype=int)
        centroids = mesh.vertices[mesh.elements].mean(axis=1)
        for e, c in enumerate(centroids):
            m = rule(c)
            if id(m) not in idx_of:
                idx_of[id(m)] = len(mats)
                mats.append(m)
            index[e] = idx_of[id(m)]
        return cls(tuple(mats), index)

    def of(self, e):
        return self.materials[self.index[e]]
