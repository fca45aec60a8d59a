"""Reference-element polynomial bases, quadrature and L2 projections.

The reference triangle is T0 = {(x, y) : x, y >= 0, x + y <= 1} and the
reference segment is [0, 1].  Volume bases are orthonormal Dubiner
(Koornwinder) polynomials obtained from the classical basis on the
(-1,-1),(1,-1),(-1,1) simplex by an affine pull-back; face bases are
shifted, L2-normalized Legendre polynomials.  Orthonormality on the
reference element makes every physical mass matrix a multiple of the
identity (affine elements only).
"""

from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial, lgamma

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import eval_jacobi, roots_jacobi

#: Largest supported quadrature exactness degree (both shapes).
MAX_EXACTNESS = 60


class BasisError(Exception):
    """Raised for broken basis / quadrature construction requests."""


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    shape: str                 # "triangle" or "segment"
    exactness: int
    points: np.ndarray         # (nq, 2) for triangle, (nq,) for segment
    weights: np.ndarray        # (nq,)

    @property
    def n(self):
        return self.weights.size


def _triangle_monomial_integral(a, b):
    # exact value of \int_{T0} x^a y^b = a! b! / (a+b+2)!
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def make_quadrature(shape, exactness):
    """Build a positive-weight quadrature rule of the given exactness.

    Triangle rules use a Duffy-type collapsed product of Gauss-Legendre
    (in the collapsed direction) and Gauss-Jacobi with weight (1-y)
    (in the other), which integrates every polynomial of total degree
    <= ``exactness`` exactly.  The declared exactness is verified against
    the monomial oracle at construction time.
    """
    if exactness < 0:
        raise BasisError("exactness must be >= 0")
    if exactness > MAX_EXACTNESS:
        raise BasisError(
            f"exactness {exactness} exceeds supported cap {MAX_EXACTNESS}")

    n1 = exactness // 2 + 1
    if shape == "segment":
        x, w = leggauss(n1)
        pts = 0.5 * (x + 1.0)
        wts = 0.5 * w
        rule = QuadratureRule("segment", exactness, pts, wts)
        _verify_segment_rule(rule)
        return rule
    if shape == "triangle":
        # xi in [0,1] Gauss-Legendre, eta in [0,1] Gauss-Jacobi w/ weight (1-eta)
        xg, wg = leggauss(n1)
        xi = 0.5 * (xg + 1.0)
        wxi = 0.5 * wg
        uj, wj = roots_jacobi(n1, 1.0, 0.0)
        eta = 0.5 * (uj + 1.0)
        weta = 0.25 * wj          # absorbs the (1-eta) Jacobi weight
        X = np.outer(xi, 1.0 - eta).ravel()
        Y = np.tile(eta, n1)
        W = np.outer(wxi, weta).ravel()
        pts = np.column_stack([X, Y])
        rule = QuadratureRule("triangle", exactness, pts, W)
        _verify_triangle_rule(rule)
        return rule
    raise BasisError(f"unknown shape {shape!r}")


def _verify_triangle_rule(rule):
    x, y = rule.points[:, 0], rule.points[:, 1]
    for a in range(rule.exactness + 1):
        for b in range(rule.exactness + 1 - a):
            val = np.dot(rule.weights, x**a * y**b)
            ref = _triangle_monomial_integral(a, b)
            if abs(val - ref) > 1e-13 * max(1.0, abs(ref) / ref):
                # relative check: ref > 0 always here
                if abs(val - ref) > 1e-13 * ref and abs(val - ref) > 1e-15:
                    raise BasisError(
                        f"triangle rule failed monomial ({a},{b}): {val} vs {ref}")


def _verify_segment_rule(rule):
    for a in range(rule.exactness + 1):
        val = np.dot(rule.weights, rule.points**a)
        ref = 1.0 / (a + 1)
        if abs(val - ref) > 1e-13 * ref:
            raise BasisError(f"segment rule failed monomial x^{a}: {val} vs {ref}")


# ---------------------------------------------------------------------------
# orthonormal Jacobi helpers (Hesthaven-Warburton normalization)
# ---------------------------------------------------------------------------

def _jacobi_norm(n, alpha, beta):
    # L2 norm of P_n^(alpha,beta) on [-1,1] with weight (1-x)^a (1+x)^b
    ln = ((alpha + beta + 1) * np.log(2.0)
          + lgamma(n + alpha + 1) + lgamma(n + beta + 1)
          - lgamma(n + alpha + beta + 1) - lgamma(n + 1)
          - np.log(2 * n + alpha + beta + 1))
    return np.exp(0.5 * ln)


def _jacobi(x, alpha, beta, n):
    return eval_jacobi(n, alpha, beta, x) / _jacobi_norm(n, alpha, beta)


def _grad_jacobi(x, alpha, beta, n):
    if n == 0:
        return np.zeros_like(x)
    return np.sqrt(n * (n + alpha + beta + 1.0)) * _jacobi(x, alpha + 1, beta + 1, n - 1)


def _rs_to_ab(r, s):
    a = np.full_like(r, -1.0)
    ok = s != 1.0
    a[ok] = 2.0 * (1.0 + r[ok]) / (1.0 - s[ok]) - 1.0
    return a, s


def _simplex2dp(a, b, i, j):
    h1 = _jacobi(a, 0.0, 0.0, i)
    h2 = _jacobi(b, 2.0 * i + 1.0, 0.0, j)
    return np.sqrt(2.0) * h1 * h2 * (1.0 - b) ** i


def _grad_simplex2dp(a, b, i, j):
    fa = _jacobi(a, 0.0, 0.0, i)
    dfa = _grad_jacobi(a, 0.0, 0.0, i)
    gb = _jacobi(b, 2.0 * i + 1.0, 0.0, j)
    dgb = _grad_jacobi(b, 2.0 * i + 1.0, 0.0, j)

    dr = dfa * gb
    if i > 0:
        dr = dr * (0.5 * (1.0 - b)) ** (i - 1)
    ds = dfa * (gb * 0.5 * (1.0 + a))
    if i > 0:
        ds = ds * (0.5 * (1.0 - b)) ** (i - 1)
    tmp = dgb * (0.5 * (1.0 - b)) ** i
    if i > 0:
        tmp = tmp - 0.5 * i * gb * (0.5 * (1.0 - b)) ** (i - 1)
    ds = ds + fa * tmp
    scale = 2.0 ** (i + 0.5)
    return scale * dr, scale * ds


# ---------------------------------------------------------------------------
# bases
# ---------------------------------------------------------------------------

def volume_dim(m):
    return (m + 1) * (m + 2) // 2


@dataclass(frozen=True)
class VolumeBasis:
    """Orthonormal scalar polynomial basis of degree m on T0."""

    degree: int
    orthonormal: bool = field(default=True, init=False)

    @property
    def dim(self):
        return volume_dim(self.degree)

    def eval(self, pts):
        """Values at pts (npts, 2) -> array (npts, dim)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = 2.0 * pts[:, 0] - 1.0
        s = 2.0 * pts[:, 1] - 1.0
        a, b = _rs_to_ab(r, s)
        out = np.empty((pts.shape[0], self.dim))
        sk = 0
        for i in range(self.degree + 1):
            for j in range(self.degree - i + 1):
                # factor 2: pull-back of the HW simplex (area 2) onto T0 (area 1/2)
                out[:, sk] = 2.0 * _simplex2dp(a, b, i, j)
                sk += 1
        return out

    def grad(self, pts):
        """Gradients at pts -> array (npts, dim, 2)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        r = 2.0 * pts[:, 0] - 1.0
        s = 2.0 * pts[:, 1] - 1.0
        a, b = _rs_to_ab(r, s)
        out = np.empty((pts.shape[0], self.dim, 2))
        sk = 0
        for i in range(self.degree + 1):
            for j in range(self.degree - i + 1):
                dr, ds = _grad_simplex2dp(a, b, i, j)
                out[:, sk, 0] = 4.0 * dr
                out[:, sk, 1] = 4.0 * ds
                sk += 1
        return out


@dataclass(frozen=True)
class FaceBasis:
    """Orthonormal scalar polynomial basis of degree m on [0, 1]."""

    degree: int

    @property
    def dim(self):
        return self.degree + 1

    def eval(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = 2.0 * t - 1.0
        out = np.empty((t.size, self.dim))
        for n in range(self.dim):
            out[:, n] = np.sqrt(2.0) * _jacobi(x, 0.0, 0.0, n)
        return out


@lru_cache(maxsize=None)
def volume_basis(degree):
    return VolumeBasis(degree)


@lru_cache(maxsize=None)
def face_basis(degree):
    return FaceBasis(degree)


@lru_cache(maxsize=None)
def triangle_rule(exactness):
    return make_quadrature("triangle", exactness)


@lru_cache(maxsize=None)
def segment_rule(exactness):
    return make_quadrature("segment", exactness)


# ---------------------------------------------------------------------------
# projections (reference-element building blocks)
# ---------------------------------------------------------------------------

def default_exactness(m):
    """Quadrature degree used to project general (non-polynomial) data."""
    return 2 * m + 4


def project_volume(f, m, exactness=None):
    """L2-orthogonal projection of f onto P_m(T0), per component.

    ``f`` maps an (npts, 2) array of reference coordinates to values of
    shape (npts,) or (npts, c) or (npts, c1, c2); symmetric tensor input
    yields symmetric output since the projection acts component-wise.
    Returns coefficients w.r.t. the orthonormal basis, shape (dim, ...).
    """
    rule = triangle_rule(exactness if exactness is not None else default_exactness(m))
    vb = volume_basis(m)
    phi = vb.eval(rule.points)                       # (nq, dim)
    vals = np.asarray(f(rule.points), dtype=float)   # (nq, ...)
    # reference mass matrix is the identity, so coefficients are plain
    # weighted inner products
    return np.einsum("q,qi,q...->i...", rule.weights, phi, vals)


def project_face(g, m, exactness=None):
    """L2 projection of g(t), t in [0,1], onto P_m; coefficients (dim, ...)."""
    rule = segment_rule(exactness if exactness is not None else default_exactness(m))
    fb = face_basis(m)
    phi = fb.eval(rule.points)
    vals = np.asarray(g(rule.points), dtype=float)
    return np.einsum("q,qi,q...->i...", rule.weights, phi, vals)


def eval_volume(coeff, pts, m):
    """Evaluate a coefficient vector of P_m(T0) at reference points."""
    phi = volume_basis(m).eval(pts)
    return np.einsum("qi,i...->q...", phi, np.asarray(coeff))


def eval_face(coeff, t, m):
    phi = face_basis(m).eval(t)
    return np.einsum("qi,i...->q...", phi, np.asarray(coeff))


# ---------------------------------------------------------------------------
# discrete trace inequality probe
# ---------------------------------------------------------------------------

def trace_constant_element(k, vertices):
    """Measured trace constant sup over P_k of the boundary/volume ratio.

    For a single triangle with the given physical ``vertices`` (3, 2),
    returns sup_{xi in P_k} ||(h_F^{1/2}/(k+1)) xi||_{dK} / ||xi||_K via a
    generalized eigenvalue solve of the boundary-mass against volume-mass
    matrix.
    """
    from scipy.linalg import eigh

    v = np.asarray(vertices, dtype=float)
    jac = np.column_stack([v[1] - v[0], v[2] - v[0]])
    detj = abs(np.linalg.det(jac))
    vb = volume_basis(k)
    nb = vb.dim

    ref_edges = [((0.0, 0.0), (1.0, 0.0)), ((1.0, 0.0), (0.0, 1.0)),
                 ((0.0, 1.0), (0.0, 0.0))]
    srule = segment_rule(2 * k + 2)
    bmat = np.zeros((nb, nb))
    for (p0, p1), (i0, i1) in zip(ref_edges, [(0, 1), (1, 2), (2, 0)]):
        length = np.linalg.norm(v[i1] - v[i0])
        t = srule.points
        pts = np.outer(1.0 - t, p0) + np.outer(t, p1)
        phi = vb.eval(pts)
        w = srule.weights * length * (length / (k + 1) ** 2)
        bmat += np.einsum("q,qi,qj->ij", w, phi, phi)
    mmat = detj * np.eye(nb)
    lam = eigh(bmat, mmat, eigvals_only=True)
    return float(np.sqrt(lam[-1]))


def trace_constant_probe(k, meshes):
    """Max measured trace constant over all elements of the given meshes."""
    worst = 0.0
    for mesh in meshes:
        for tri in mesh.elements:
            c = trace_constant_element(k, mesh.vertices[tri])
            worst = max(worst, c)
    return worst
