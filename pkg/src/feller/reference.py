"""Independent ground-truth oracles: closed-form heat semigroups and a
Crank-Nicolson finite-difference solver.

These never touch the Chernoff/walk code paths; they exist to certify them.
Series and quadrature truncations are chosen so the oracle error sits at
least an order below every tolerance it is used to check, and doubling any
truncation is verified to move the result by less than 1e-10.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, sparse
from scipy.sparse.linalg import splu

from .errors import OracleUnavailableError, TruncationBudgetError, VariantIncompatibleError
from .fields import GeneratorSpec
from .grids import GridFunction
from .manifolds import Point, TWO_PI, hyperbolic_h2


@dataclass(frozen=True)
class HeatKernelId:
    """Closed-form heat-kernel selector for e^{t (1/2) Laplacian}."""

    tag: str                     # gauss-rd | wrapped-gauss-s1 | torus-product
    #                            | sphere-harmonics | hyperbolic-h2
    d: int = 1                   # gauss-rd only
    l_max: int = 64              # sphere-harmonics only

    @classmethod
    def from_string(cls, s: str) -> "HeatKernelId":
        name, _, arg = s.strip().lower().partition(":")
        if name == "gauss-rd":
            return cls("gauss-rd", d=int(arg) if arg else 1)
        if name == "sphere-harmonics":
            lm = int(arg) if arg else 64
            if lm < 8:
                raise ValueError("sphere-harmonics requires l_max >= 8")
            return cls("sphere-harmonics", l_max=lm)
        if name in ("wrapped-gauss-s1", "torus-product", "hyperbolic-h2"):
            return cls(name)
        raise ValueError(f"unknown heat kernel {s!r}")


def _as_callable(f):
    if isinstance(f, GridFunction):
        return lambda coords: f.interpolate(coords)
    return f


# -- Gauss-Hermite on R^d -------------------------------------------------------

_GH_NODES = 64


def _gauss_rd(f, t, x, d):
    if d > 3:
        raise OracleUnavailableError("gauss-rd oracle supports d <= 3")
    u, w = np.polynomial.hermite.hermgauss(_GH_NODES)
    scale = math.sqrt(2.0 * t)
    if d == 1:
        pts = x[None, :] + scale * u[:, None]
        return float(w @ np.asarray(f(pts)) / math.sqrt(math.pi))
    grids = np.meshgrid(*([u] * d), indexing="ij")
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=-1)
    weight = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    pts = x[None, :] + scale * offsets
    return float(weight @ np.asarray(f(pts)) / math.pi ** (d / 2.0))


# -- wrapped Gaussian on S^1 ------------------------------------------------------


def _wrapped_gauss_kernel(delta: np.ndarray, t: float) -> np.ndarray:
    """Heat kernel of (1/2) d^2/dtheta^2 on the circle at time t."""
    k_max = int(math.ceil(6.0 / math.sqrt(t))) + 3
    acc = np.zeros_like(delta)
    norm = 1.0 / math.sqrt(TWO_PI * t)
    for k in range(-k_max, k_max + 1):
        acc += np.exp(-((delta + TWO_PI * k) ** 2) / (2.0 * t))
    # enforced truncation check: the next shell must be negligible
    tail = np.exp(-((np.abs(delta) + TWO_PI * (k_max + 1) - np.pi) ** 2) / (2.0 * t))
    if float(tail.max()) * norm > 1e-12:
        raise TruncationBudgetError("wrapped Gaussian series truncated too early")
    return norm * acc


_S1_QUAD = 4096


def _wrapped_gauss_s1(f, t, theta):
    grid = TWO_PI * np.arange(_S1_QUAD) / _S1_QUAD
    vals = np.asarray(f(grid[:, None]), dtype=float)
    kern = _wrapped_gauss_kernel(theta - grid, t)
    return float(kern @ vals * (TWO_PI / _S1_QUAD))


def _torus_product(f, t, x):
    n = 512
    g1 = TWO_PI * np.arange(n) / n
    g2 = TWO_PI * np.arange(n) / n
    t1, t2 = np.meshgrid(g1, g2, indexing="ij")
    pts = np.stack([t1.ravel(), t2.ravel()], axis=-1)
    vals = np.asarray(f(pts), dtype=float).reshape(n, n)
    k1 = _wrapped_gauss_kernel(x[0] - g1, t)
    k2 = _wrapped_gauss_kernel(x[1] - g2, t)
    return float(k1 @ vals @ k2 * (TWO_PI / n) ** 2)


# -- spherical-harmonic series on S^2 ---------------------------------------------


def _legendre_sum(c: np.ndarray, t: float, l_max: int) -> np.ndarray:
    """p_t(c) = sum_l (2l+1)/(4pi) e^{-l(l+1)t/2} P_l(c), with tail check."""
    p_prev = np.ones_like(c)
    p_cur = c.copy()
    acc = (1.0 / (4.0 * math.pi)) * p_prev
    acc += (3.0 / (4.0 * math.pi)) * math.exp(-1.0 * t) * p_cur
    last_term = np.inf
    for l in range(2, l_max + 1):
        p_next = ((2 * l - 1) * c * p_cur - (l - 1) * p_prev) / l
        coef = (2 * l + 1) / (4.0 * math.pi) * math.exp(-0.5 * l * (l + 1) * t)
        acc += coef * p_next
        p_prev, p_cur = p_cur, p_next
        last_term = coef  # |P_l| <= 1
    if last_term > 1e-12:
        raise TruncationBudgetError(
            f"spherical-harmonic series: term at l={l_max} is {last_term:.1e}; raise l_max"
        )
    return acc


def _sphere_harmonics(f, t, x, l_max):
    n_c, n_phi = 256, 256
    c, w = np.polynomial.legendre.leggauss(n_c)
    phi = TWO_PI * np.arange(n_phi) / n_phi
    # orthonormal tangent pair at x
    ref = np.array([0.0, 0.0, 1.0]) if abs(x[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(ref, x)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(x, e1)
    s = np.sqrt(np.maximum(1.0 - c**2, 0.0))
    y = (
        c[:, None, None] * x[None, None, :]
        + s[:, None, None]
        * (np.cos(phi)[None, :, None] * e1 + np.sin(phi)[None, :, None] * e2)
    )
    vals = np.asarray(f(y.reshape(-1, 3)), dtype=float).reshape(n_c, n_phi)
    kern = _legendre_sum(c, t, l_max)
    return float((w * kern) @ vals.mean(axis=1) * TWO_PI)


# -- hyperbolic plane --------------------------------------------------------------


def h2_heat_kernel(rho: np.ndarray, t: float) -> np.ndarray:
    """Heat kernel of the full Laplacian on H^2 at time t, distance rho.

    McKean's integral: p_t(rho) = sqrt(2) e^{-t/4} / (4 pi t)^{3/2}
                       * int_rho^inf s e^{-s^2/(4t)} / sqrt(cosh s - cosh rho) ds.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    out = np.empty_like(rho)
    pref = math.sqrt(2.0) * math.exp(-t / 4.0) / (4.0 * math.pi * t) ** 1.5
    with warnings.catch_warnings():
        # the explicit error-estimate check below is the convergence gate
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for i, r in enumerate(rho):
            if r * r / (4.0 * t) > 600.0:
                out[i] = 0.0  # far tail: below 1e-260, irrelevant at double precision
                continue
            if r < 1e-12:
                def integrand0(s):
                    if s < 1e-12:
                        return math.sqrt(2.0) * math.exp(-s * s / (4.0 * t))
                    return s * math.exp(-s * s / (4.0 * t)) / math.sqrt(2.0) / math.sinh(0.5 * s)

                val, err = integrate.quad(integrand0, 0.0, r + 20.0 * math.sqrt(t) + 5.0,
                                          epsabs=1e-13, epsrel=1e-11, limit=200)
            else:
                # s = r + u^2 removes the inverse-square-root endpoint singularity
                def integrand(u):
                    s = r + u * u
                    den = math.sqrt(max(math.cosh(s) - math.cosh(r), 0.0))
                    if den == 0.0:
                        return 2.0 * s * math.exp(-s * s / (4.0 * t)) / math.sqrt(math.sinh(r))
                    return 2.0 * u * s * math.exp(-s * s / (4.0 * t)) / den

                u_max = math.sqrt(20.0 * math.sqrt(t) + 5.0)
                val, err = integrate.quad(integrand, 0.0, u_max,
                                          epsabs=1e-13, epsrel=1e-11, limit=200)
            if err > 1e-8 * max(abs(val), 1.0):
                raise TruncationBudgetError("H2 kernel quadrature failed to converge")
            out[i] = pref * val
    return out


def h2_kernel_mass(t: float, rho_max: float = None) -> float:
    """int p_t 2 pi sinh(rho) drho; equals 1, used as an oracle self-check."""
    rho_max = rho_max or (12.0 * math.sqrt(t) + 6.0)
    nodes, w = np.polynomial.legendre.leggauss(256)
    rho = 0.5 * rho_max * (nodes + 1.0)
    vals = h2_heat_kernel(rho, t) * 2.0 * math.pi * np.sinh(rho)
    return float(vals @ w * 0.5 * rho_max)


def _hyperbolic_h2(f, t, x):
    # polar quadrature around x: u(x) = int p_{t/2}(rho) f(exp_x(rho, phi)) sinh(rho)
    m = hyperbolic_h2()
    th = t / 2.0  # e^{t (1/2) Laplacian} = heat kernel at time t/2
    rho_max = 12.0 * math.sqrt(th) + 6.0
    n_rho, n_phi = 192, 256
    nodes, w = np.polynomial.legendre.leggauss(n_rho)
    rho = 0.5 * rho_max * (nodes + 1.0)
    kern = h2_heat_kernel(rho, th)
    phi = TWO_PI * np.arange(n_phi) / n_phi
    frame = m.frame_batch(x[None, :])  # (2, 1, 2)
    e1, e2 = frame[0, 0], frame[1, 0]
    dirs = np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2  # unit g-norm
    starts = np.broadcast_to(x, (n_phi, 2)).copy()
    acc = np.empty(n_rho)
    for i, r in enumerate(rho):
        pts = m.geodesic_batch(starts, dirs, r)
        acc[i] = float(np.asarray(f(pts), dtype=float).mean())
    integrand = kern * np.sinh(rho) * acc * TWO_PI
    return float(integrand @ w * 0.5 * rho_max)


def exact_semigroup(kernel: HeatKernelId, f, t: float, x) -> float:
    """(e^{t (1/2) Laplacian} f)(x) from the closed-form kernel."""
    if t <= 0.0:
        raise ValueError("exact_semigroup requires t > 0")
    fn = _as_callable(f)
    coords = x.coords if isinstance(x, Point) else np.atleast_1d(np.asarray(x, dtype=float))
    if kernel.tag == "gauss-rd":
        return _gauss_rd(fn, t, coords, kernel.d)
    if kernel.tag == "wrapped-gauss-s1":
        return _wrapped_gauss_s1(fn, t, float(coords[0]))
    if kernel.tag == "torus-product":
        return _torus_product(fn, t, coords)
    if kernel.tag == "sphere-harmonics":
        return _sphere_harmonics(fn, t, coords, kernel.l_max)
    if kernel.tag == "hyperbolic-h2":
        return _hyperbolic_h2(fn, t, coords)
    raise OracleUnavailableError(f"no oracle for {kernel.tag}")


# -- Crank-Nicolson finite differences ---------------------------------------------

_MAX_DT = 1e-2


@dataclass(frozen=True)
class FdSolverSettings:
    """Crank-Nicolson settings; the spatial grid comes from the input grid."""

    steps: int
    scheme: str = "crank-nicolson"
    boundary: str = "periodic"
    nodes: Optional[int] = None  # validated against the input grid when set

    def __post_init__(self):
        if self.scheme != "crank-nicolson":
            raise ValueError("only the crank-nicolson scheme is implemented")
        if self.boundary != "periodic":
            raise ValueError("only periodic boundaries are implemented")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


def _shift_impl(n: int, k: int) -> sparse.csr_matrix:
    """Periodic shift matrix: (S u)_i = u_{i+k mod n}."""
    rows = np.arange(n)
    cols = np.mod(rows + k, n)
    return sparse.csr_matrix((np.ones(n), (rows, cols)), shape=(n, n))


def _advection_beta(spec: GeneratorSpec, nodes: np.ndarray) -> np.ndarray:
    """First-order coefficient left over after the conservative part.

    In the flat periodic charts the operator splits as
    L = 1/2 d_j(a^{jk} d_k .) + beta . grad + c with
    beta^j = sigma_0^j - 1/2 sum_k (div A_k) sigma_k^j; beta vanishes
    identically under the derived drift.
    """
    from .fields import divergence_batch

    if spec.drift_policy == "derived":
        return np.zeros_like(nodes)
    extra = spec.drift.comps(nodes)
    if spec.drift_policy == "derived_plus":
        return extra
    acc = extra.copy()
    for f in spec.fields:
        acc -= 0.5 * divergence_batch(f, nodes)[:, None] * f.comps(nodes)
    return acc


def _operator_circle(spec: GeneratorSpec, n: int) -> sparse.csr_matrix:
    h = TWO_PI / n
    theta = TWO_PI * np.arange(n) / n
    mid = theta + 0.5 * h
    a_mid = np.zeros(n)
    for f in spec.fields:
        a_mid += f.comps(mid[:, None])[:, 0] ** 2
    sp = _shift_impl(n, 1)
    sm = _shift_impl(n, -1)
    eye = sparse.eye(n, format="csr")
    wp = sparse.diags(a_mid)
    wm = sparse.diags(np.roll(a_mid, 1))
    lap = (wp @ (sp - eye) - wm @ (eye - sm)) / (2.0 * h * h)
    nodes = theta[:, None]
    beta = _advection_beta(spec, nodes)[:, 0]
    adv = sparse.diags(beta) @ ((sp - sm) / (2.0 * h))
    op = lap + adv
    if spec.potential is not None:
        op = op + sparse.diags(spec.potential_values(nodes))
    return op.tocsr()


def _operator_torus(spec: GeneratorSpec, shape: tuple[int, int]) -> sparse.csr_matrix:
    n1, n2 = shape
    h1, h2 = TWO_PI / n1, TWO_PI / n2
    t1 = TWO_PI * np.arange(n1) / n1
    t2 = TWO_PI * np.arange(n2) / n2
    g1, g2 = np.meshgrid(t1, t2, indexing="ij")
    nodes = np.stack([g1.ravel(), g2.ravel()], axis=-1)

    def a_matrix(pts):
        acc = np.zeros((pts.shape[0], 2, 2))
        for f in spec.fields:
            s = f.comps(pts)
            acc += np.einsum("ni,nj->nij", s, s)
        return acc

    eye1, eye2 = sparse.eye(n1, format="csr"), sparse.eye(n2, format="csr")
    s1p = sparse.kron(_shift_impl(n1, 1), eye2, format="csr")
    s1m = sparse.kron(_shift_impl(n1, -1), eye2, format="csr")
    s2p = sparse.kron(eye1, _shift_impl(n2, 1), format="csr")
    s2m = sparse.kron(eye1, _shift_impl(n2, -1), format="csr")
    eye = sparse.eye(n1 * n2, format="csr")

    mid1 = nodes.copy()
    mid1[:, 0] += 0.5 * h1
    a11_mid = a_matrix(mid1)[:, 0, 0]
    mid2 = nodes.copy()
    mid2[:, 1] += 0.5 * h2
    a22_mid = a_matrix(mid2)[:, 1, 1]
    # roll midpoint values by one cell along the corresponding axis
    a11_m = np.roll(a11_mid.reshape(n1, n2), 1, axis=0).ravel()
    a22_m = np.roll(a22_mid.reshape(n1, n2), 1, axis=1).ravel()
    flux1 = (sparse.diags(a11_mid) @ (s1p - eye) - sparse.diags(a11_m) @ (eye - s1m)) / (
        2.0 * h1 * h1
    )
    flux2 = (sparse.diags(a22_mid) @ (s2p - eye) - sparse.diags(a22_m) @ (eye - s2m)) / (
        2.0 * h2 * h2
    )
    d1c = (s1p - s1m) / (2.0 * h1)
    d2c = (s2p - s2m) / (2.0 * h2)
    a12 = a_matrix(nodes)[:, 0, 1]
    cross = 0.5 * (d1c @ sparse.diags(a12) @ d2c + d2c @ sparse.diags(a12) @ d1c)
    beta = _advection_beta(spec, nodes)
    adv = sparse.diags(beta[:, 0]) @ d1c + sparse.diags(beta[:, 1]) @ d2c
    op = flux1 + flux2 + cross + adv
    if spec.potential is not None:
        op = op + sparse.diags(spec.potential_values(nodes))
    return op.tocsr()


def fd_solve(
    spec: GeneratorSpec, f0: GridFunction, t: float, settings: FdSolverSettings
) -> GridFunction:
    """Crank-Nicolson solution of du/dt = L u on Circle or Torus2 grids.

    The second-order part is discretized in conservative (flux) form, so
    with the derived drift and c = 0 the discrete volume integral is
    conserved to rounding.  Second-order accurate in space and time.
    """
    name = f0.manifold.name
    if name not in ("circle", "torus2"):
        raise VariantIncompatibleError(f"fd_solve supports circle and torus2, not {name}")
    if f0.manifold is not spec.manifold:
        raise VariantIncompatibleError("grid and generator live on different manifolds")
    if settings.nodes is not None and settings.nodes != f0.values.shape[0]:
        raise ValueError("settings.nodes does not match the input grid")
    dt = t / settings.steps
    if dt > _MAX_DT + 1e-15:
        raise ValueError(
            f"time step {dt:.3g} exceeds the accuracy cap {_MAX_DT}; raise steps"
        )
    if name == "circle":
        op = _operator_circle(spec, f0.values.shape[0])
    else:
        op = _operator_torus(spec, f0.values.shape)
    n_tot = op.shape[0]
    eye = sparse.eye(n_tot, format="csr")
    lhs = splu((eye - 0.5 * dt * op).tocsc())
    rhs = (eye + 0.5 * dt * op).tocsr()
    u = f0.values.ravel().copy()
    for _ in range(settings.steps):
        u = lhs.solve(rhs @ u)
    return f0.with_values(u)
