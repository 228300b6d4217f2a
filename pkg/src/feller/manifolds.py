"""Built-in Riemannian manifolds with analytic geometry.

Every built-in carries a canonical global chart:

* ``Euclidean(d)`` - Cartesian coordinates ``x1..xd``;
* ``Circle`` - angle ``theta`` reduced to ``[0, 2*pi)``;
* ``Torus2`` - angles ``(theta1, theta2)``, each reduced to ``[0, 2*pi)``;
* ``HyperbolicHalfPlane`` - ``(x, y)`` with ``y > 0`` and metric
  ``(dx^2 + dy^2) / y^2`` (curvature -1);
* ``Sphere2`` - points stored extrinsically as unit vectors in R^3; chart
  quantities are evaluated in an on-demand orthographic tangent-plane chart
  centered at the query point, which avoids the coordinate singularities of
  spherical angles.

Geodesics, log maps and distances are analytic for all built-ins; they act
as ground truth for the numerical integrators elsewhere in the package.
All objects are immutable and every operation is a pure function, so
concurrent use is safe by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BeyondInjectivityRadiusError,
    IncompatibleBaseError,
    InvalidPointError,
    NotParallelizableError,
    UnsupportedOperationError,
)

TWO_PI = 2.0 * np.pi

# Cut-locus guard: log maps refuse targets within this slack of the
# injectivity radius.
_CUT_TOL = 1e-9


def wrap_angle(a):
    """Reduce angles to [0, 2*pi)."""
    return np.mod(a, TWO_PI)


def wrap_signed(a):
    """Reduce angle differences to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a), TWO_PI)


@dataclass(frozen=True)
class Point:
    """A manifold point in the canonical global chart."""

    manifold: "Manifold"
    coords: np.ndarray

    def __repr__(self):
        return f"Point({self.manifold.name}, {np.array2string(self.coords, precision=6)})"


@dataclass(frozen=True)
class TangentVector:
    """Tangent vector with chart-basis components (ambient for Sphere2)."""

    base: Point
    comps: np.ndarray

    def __repr__(self):
        return f"TangentVector({self.base!r}, {np.array2string(self.comps, precision=6)})"


@dataclass(frozen=True)
class MetricData:
    """Metric, inverse and volume density at one point."""

    g: np.ndarray
    g_inv: np.ndarray
    sqrt_det: float


class Manifold:
    """Base class; subclasses implement chart geometry on coordinate arrays.

    Batch methods take arrays of shape ``(n, chart_dim)`` and are the hot
    path; the ``Point``-level operations below wrap them.
    """

    name: str = "abstract"
    dim: int = 0          # intrinsic dimension
    chart_dim: int = 0    # stored coordinate length (3 for Sphere2)
    parallelizable: bool = True
    injectivity_radius: float = np.inf

    # -- points ---------------------------------------------------------

    def point(self, coords) -> Point:
        c = np.atleast_1d(np.asarray(coords, dtype=float)).copy()
        if c.shape != (self.chart_dim,):
            raise InvalidPointError(
                f"{self.name}: expected {self.chart_dim} coordinates, got {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise InvalidPointError(f"{self.name}: non-finite coordinates")
        c = self._validate(c)
        c.setflags(write=False)
        return Point(self, c)

    def tangent(self, base: Point, comps) -> TangentVector:
        self._check_point(base)
        v = np.atleast_1d(np.asarray(comps, dtype=float)).copy()
        if v.shape != (self.chart_dim,):
            raise IncompatibleBaseError(
                f"{self.name}: expected {self.chart_dim} components, got {v.shape}"
            )
        self._validate_tangent(base.coords, v)
        v.setflags(write=False)
        return TangentVector(base, v)

    def _check_point(self, x: Point):
        if x.manifold is not self:
            raise IncompatibleBaseError(
                f"point on {x.manifold.name} used with {self.name}"
            )

    def _validate(self, c: np.ndarray) -> np.ndarray:
        return c

    def _validate_tangent(self, x: np.ndarray, v: np.ndarray):
        pass

    # -- chart geometry (single point) -----------------------------------

    def metric(self, x: Point) -> MetricData:
        raise NotImplementedError

    def christoffel(self, x: Point) -> np.ndarray:
        raise NotImplementedError

    def frame(self, x: Point) -> list[TangentVector]:
        """Orthonormal global frame at x (parallelizable built-ins only)."""
        if not self.parallelizable:
            raise NotParallelizableError(
                f"{self.name} admits no global smooth frame"
            )
        comps = self.frame_batch(x.coords[None, :])
        return [TangentVector(x, np.array(comps[k, 0])) for k in range(self.dim)]

    # -- batch geometry ---------------------------------------------------

    def wrap(self, coords: np.ndarray) -> np.ndarray:
        """Reduce chart coordinates to their canonical representatives."""
        return coords

    def geodesic_batch(self, xs, vs, t):
        raise NotImplementedError

    def log_batch(self, xs, ys):
        raise NotImplementedError

    def distance_batch(self, xs, ys):
        raise NotImplementedError

    def frame_batch(self, xs) -> np.ndarray:
        """Frame components, shape (dim, n, chart_dim)."""
        raise NotParallelizableError(f"{self.name} admits no global smooth frame")

    def g_norm_batch(self, xs, vs):
        raise NotImplementedError

    def dlog_sqrt_det_batch(self, xs):
        """Chart gradient of log(sqrt(det g)), shape like xs."""
        raise NotImplementedError

    def random_points(self, n, rng) -> np.ndarray:
        raise NotImplementedError


class Euclidean(Manifold):
    """Flat R^d with the standard metric."""

    def __init__(self, d: int):
        if d < 1:
            raise InvalidPointError("Euclidean dimension must be >= 1")
        self.name = f"euclidean:{d}"
        self.dim = d
        self.chart_dim = d

    def metric(self, x):
        self._check_point(x)
        eye = np.eye(self.dim)
        return MetricData(eye, eye.copy(), 1.0)

    def christoffel(self, x):
        self._check_point(x)
        return np.zeros((self.dim,) * 3)

    def geodesic_batch(self, xs, vs, t):
        t = np.asarray(t, dtype=float)
        return xs + (t[..., None] if t.ndim else t) * vs

    def log_batch(self, xs, ys):
        return ys - xs

    def distance_batch(self, xs, ys):
        return np.linalg.norm(ys - xs, axis=-1)

    def frame_batch(self, xs):
        n = xs.shape[0]
        return np.broadcast_to(
            np.eye(self.dim)[:, None, :], (self.dim, n, self.dim)
        ).copy()

    def g_norm_batch(self, xs, vs):
        return np.linalg.norm(vs, axis=-1)

    def dlog_sqrt_det_batch(self, xs):
        return np.zeros_like(xs)

    def random_points(self, n, rng):
        return rng.uniform(-3.0, 3.0, size=(n, self.dim))


class FlatTorus(Manifold):
    """Flat manifold with all angles periodic: Circle (d=1) or Torus2 (d=2)."""

    injectivity_radius = np.pi

    def __init__(self, d: int, name: str):
        self.name = name
        self.dim = d
        self.chart_dim = d

    def _validate(self, c):
        return wrap_angle(c)

    def wrap(self, coords):
        return wrap_angle(coords)

    def metric(self, x):
        self._check_point(x)
        eye = np.eye(self.dim)
        return MetricData(eye, eye.copy(), 1.0)

    def christoffel(self, x):
        self._check_point(x)
        return np.zeros((self.dim,) * 3)

    def geodesic_batch(self, xs, vs, t):
        t = np.asarray(t, dtype=float)
        return wrap_angle(xs + (t[..., None] if t.ndim else t) * vs)

    def log_batch(self, xs, ys):
        d = wrap_signed(ys - xs)
        if np.any(np.abs(d) > np.pi - _CUT_TOL):
            raise BeyondInjectivityRadiusError(
                f"{self.name}: target on the cut locus (half-lattice)"
            )
        return d

    def distance_batch(self, xs, ys):
        # |y - x| first keeps the result bitwise symmetric in (x, y)
        d = np.mod(np.abs(ys - xs), TWO_PI)
        d = np.minimum(d, TWO_PI - d)
        return np.linalg.norm(d, axis=-1)

    def frame_batch(self, xs):
        n = xs.shape[0]
        return np.broadcast_to(
            np.eye(self.dim)[:, None, :], (self.dim, n, self.dim)
        ).copy()

    def g_norm_batch(self, xs, vs):
        return np.linalg.norm(vs, axis=-1)

    def dlog_sqrt_det_batch(self, xs):
        return np.zeros_like(xs)

    def random_points(self, n, rng):
        return rng.uniform(0.0, TWO_PI, size=(n, self.dim))


class HyperbolicHalfPlane(Manifold):
    """Upper half plane with metric (dx^2 + dy^2)/y^2."""

    name = "hyperbolic-h2"
    dim = 2
    chart_dim = 2

    def _validate(self, c):
        if c[1] <= 0.0:
            raise InvalidPointError("hyperbolic-h2: y must be > 0")
        return c

    def metric(self, x):
        self._check_point(x)
        y = x.coords[1]
        g = np.diag([1.0 / y**2, 1.0 / y**2])
        g_inv = np.diag([y**2, y**2])
        return MetricData(g, g_inv, 1.0 / y**2)

    def christoffel(self, x):
        self._check_point(x)
        y = x.coords[1]
        gamma = np.zeros((2, 2, 2))
        gamma[0, 0, 1] = gamma[0, 1, 0] = -1.0 / y
        gamma[1, 0, 0] = 1.0 / y
        gamma[1, 1, 1] = -1.0 / y
        return gamma

    def geodesic_batch(self, xs, vs, t):
        # Vertical rays and semicircles centered on the real axis; the
        # unit-speed arclength parameter along a semicircle is
        # u = log tan(phi/2) with phi the circle angle.
        xs = np.atleast_2d(xs)
        vs = np.atleast_2d(vs)
        t = np.broadcast_to(np.asarray(t, dtype=float), xs.shape[:1])
        x0, y0 = xs[:, 0], xs[:, 1]
        vx, vy = vs[:, 0], vs[:, 1]
        speed = np.hypot(vx, vy) / y0  # g-norm
        out = np.empty_like(xs)
        still = speed * np.abs(t) < 1e-300
        vertical = (~still) & (np.abs(vx) <= 1e-14 * np.abs(vy))
        circ = ~(still | vertical)

        out[still] = xs[still]
        if np.any(vertical):
            s = np.sign(vy[vertical])
            out[vertical, 0] = x0[vertical]
            out[vertical, 1] = y0[vertical] * np.exp(
                s * speed[vertical] * t[vertical]
            )
        if np.any(circ):
            xc, yc = x0[circ], y0[circ]
            wx, wy = vx[circ], vy[circ]
            c = xc + yc * wy / wx
            r = np.hypot(xc - c, yc)
            phi0 = np.arctan2(yc, xc - c)
            u0 = np.log(np.tan(0.5 * phi0))
            sigma = -np.sign(wx)
            u = u0 + sigma * speed[circ] * t[circ]
            phi = 2.0 * np.arctan(np.exp(u))
            out[circ, 0] = c + r * np.cos(phi)
            out[circ, 1] = r * np.sin(phi)
        return out

    def log_batch(self, xs, ys):
        xs = np.atleast_2d(xs)
        ys = np.atleast_2d(ys)
        d = self.distance_batch(xs, ys)
        out = np.zeros_like(xs)
        same = d < 1e-300
        dx = ys[:, 0] - xs[:, 0]
        vertical = (~same) & (np.abs(dx) <= 1e-14 * np.abs(ys[:, 1] - xs[:, 1]))
        circ = ~(same | vertical)
        if np.any(vertical):
            s = np.sign(ys[vertical, 1] - xs[vertical, 1])
            out[vertical, 1] = s * d[vertical] * xs[vertical, 1]
        if np.any(circ):
            px, py = xs[circ, 0], xs[circ, 1]
            qx, qy = ys[circ, 0], ys[circ, 1]
            c = (qx**2 + qy**2 - px**2 - py**2) / (2.0 * (qx - px))
            phi_p = np.arctan2(py, px - c)
            phi_q = np.arctan2(qy, qx - c)
            s = np.sign(np.log(np.tan(0.5 * phi_q)) - np.log(np.tan(0.5 * phi_p)))
            r = np.hypot(px - c, py)
            # (ux, uy) has euclidean norm R sin(phi_p) = py, i.e. unit g-norm
            ux = -s * r * np.sin(phi_p) ** 2
            uy = s * r * np.sin(phi_p) * np.cos(phi_p)
            out[circ, 0] = d[circ] * ux
            out[circ, 1] = d[circ] * uy
        return out

    def distance_batch(self, xs, ys):
        xs = np.atleast_2d(xs)
        ys = np.atleast_2d(ys)
        q = 1.0 + ((xs[:, 0] - ys[:, 0]) ** 2 + (xs[:, 1] - ys[:, 1]) ** 2) / (
            2.0 * xs[:, 1] * ys[:, 1]
        )
        return np.arccosh(np.maximum(q, 1.0))

    def frame_batch(self, xs):
        # y d/dx and y d/dy: globally smooth orthonormal frame.
        n = xs.shape[0]
        out = np.zeros((2, n, 2))
        out[0, :, 0] = xs[:, 1]
        out[1, :, 1] = xs[:, 1]
        return out

    def g_norm_batch(self, xs, vs):
        return np.linalg.norm(vs, axis=-1) / xs[..., 1]

    def dlog_sqrt_det_batch(self, xs):
        out = np.zeros_like(xs)
        out[..., 1] = -2.0 / xs[..., 1]
        return out

    def random_points(self, n, rng):
        pts = np.empty((n, 2))
        pts[:, 0] = rng.uniform(-2.0, 2.0, n)
        pts[:, 1] = np.exp(rng.uniform(-1.0, 1.0, n))
        return pts


class Sphere2(Manifold):
    """Unit sphere in R^3, stored extrinsically.

    Chart quantities (metric, Christoffels, field derivatives) refer to the
    orthographic tangent-plane chart centered at the query point, where the
    metric is the identity and the connection coefficients vanish.
    """

    name = "sphere2"
    dim = 2
    chart_dim = 3
    parallelizable = False
    injectivity_radius = np.pi

    def _validate(self, c):
        r = np.linalg.norm(c)
        if abs(r - 1.0) > 1e-12:
            raise InvalidPointError(f"sphere2: |coords| = {r!r}, expected 1")
        return c

    def _validate_tangent(self, x, v):
        if abs(float(np.dot(x, v))) > 1e-10:
            raise IncompatibleBaseError("sphere2: components not tangent to the sphere")

    @staticmethod
    def _renorm(q):
        return q / np.linalg.norm(q, axis=-1, keepdims=True)

    def metric(self, x):
        self._check_point(x)
        eye = np.eye(2)
        return MetricData(eye, eye.copy(), 1.0)

    def christoffel(self, x):
        self._check_point(x)
        return np.zeros((2, 2, 2))

    def tangent_basis(self, xs) -> np.ndarray:
        """Deterministic orthonormal tangent pairs, shape (n, 3, 2)."""
        xs = np.atleast_2d(xs)
        n = xs.shape[0]
        ref = np.zeros((n, 3))
        polar = np.abs(xs[:, 2]) > 0.9
        ref[~polar, 2] = 1.0
        ref[polar, 0] = 1.0
        e1 = np.cross(ref, xs)
        e1 = self._renorm(e1)
        e2 = np.cross(xs, e1)
        return np.stack([e1, e2], axis=-1)

    def geodesic_batch(self, xs, vs, t):
        xs = np.atleast_2d(xs)
        vs = np.atleast_2d(vs)
        t = np.broadcast_to(np.asarray(t, dtype=float), xs.shape[:1])
        speed = np.linalg.norm(vs, axis=-1)
        ang = speed * t
        small = speed < 1e-300
        out = np.empty_like(xs)
        out[small] = xs[small]
        if np.any(~small):
            u = vs[~small] / speed[~small, None]
            a = ang[~small, None]
            out[~small] = np.cos(a) * xs[~small] + np.sin(a) * u
        return self._renorm(out)

    def log_batch(self, xs, ys):
        xs = np.atleast_2d(xs)
        ys = np.atleast_2d(ys)
        c = np.clip(np.einsum("ij,ij->i", xs, ys), -1.0, 1.0)
        ang = np.arccos(c)
        if np.any(ang > np.pi - _CUT_TOL):
            raise BeyondInjectivityRadiusError("sphere2: antipodal target")
        perp = ys - c[:, None] * xs
        nrm = np.linalg.norm(perp, axis=-1)
        out = np.zeros_like(xs)
        ok = nrm > 1e-300
        out[ok] = (ang[ok] / nrm[ok])[:, None] * perp[ok]
        return out

    def distance_batch(self, xs, ys):
        xs = np.atleast_2d(xs)
        ys = np.atleast_2d(ys)
        c = np.clip(np.einsum("ij,ij->i", xs, ys), -1.0, 1.0)
        return np.arccos(c)

    def g_norm_batch(self, xs, vs):
        return np.linalg.norm(vs, axis=-1)

    def dlog_sqrt_det_batch(self, xs):
        # orthographic chart centered at the evaluation point
        return np.zeros((np.atleast_2d(xs).shape[0], 2))

    def random_points(self, n, rng):
        q = rng.normal(size=(n, 3))
        return self._renorm(q)


class CallbackManifold(Manifold):
    """User-supplied metric behind the built-in interface.

    Christoffels come from central finite differences of the metric and
    geodesics from RK4 integration of the geodesic equation.  Distances,
    log maps and frames are not available; bounded-geometry hypotheses are
    the caller's responsibility and such manifolds are excluded from the
    validation suite.
    """

    parallelizable = False

    def __init__(self, d: int, metric_fn, name: str = "custom", fd_step: float = 1e-5):
        self.name = name
        self.dim = d
        self.chart_dim = d
        self._metric_fn = metric_fn
        self._h = fd_step

    def metric(self, x):
        self._check_point(x)
        g = np.asarray(self._metric_fn(x.coords), dtype=float)
        det = np.linalg.det(g)
        if det <= 0:
            raise InvalidPointError(f"{self.name}: metric not positive definite")
        return MetricData(g, np.linalg.inv(g), float(np.sqrt(det)))

    def christoffel(self, x):
        self._check_point(x)
        c = x.coords
        d = self.dim
        h = self._h * max(1.0, float(np.linalg.norm(c)))
        dg = np.empty((d, d, d))
        for k in range(d):
            e = np.zeros(d)
            e[k] = h
            dg[k] = (
                np.asarray(self._metric_fn(c + e)) - np.asarray(self._metric_fn(c - e))
            ) / (2.0 * h)
        g_inv = np.linalg.inv(np.asarray(self._metric_fn(c), dtype=float))
        # dg[k, i, j] = d_k g_{ij}
        gamma = 0.5 * np.einsum(
            "ad,cbd->abc", g_inv, dg
        ) + 0.5 * np.einsum("ad,bdc->abc", g_inv, dg) - 0.5 * np.einsum(
            "ad,dbc->abc", g_inv, dg
        )
        return gamma

    def geodesic_batch(self, xs, vs, t):
        xs = np.atleast_2d(xs)
        vs = np.atleast_2d(vs)
        t_arr = np.broadcast_to(np.asarray(t, dtype=float), xs.shape[:1])
        out = np.empty_like(xs)
        for i in range(xs.shape[0]):
            out[i] = self._geodesic_one(xs[i], vs[i], float(t_arr[i]))
        return out

    def _geodesic_one(self, x, v, t, steps=256):
        def acc(state):
            p, w = state[: self.dim], state[self.dim :]
            gam = self.christoffel(self.point(p))
            return np.concatenate([w, -np.einsum("abc,b,c->a", gam, w, w)])

        state = np.concatenate([x, v])
        h = t / steps
        for _ in range(steps):
            k1 = acc(state)
            k2 = acc(state + 0.5 * h * k1)
            k3 = acc(state + 0.5 * h * k2)
            k4 = acc(state + h * k3)
            state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        return state[: self.dim]

    def log_batch(self, xs, ys):
        raise UnsupportedOperationError(f"{self.name}: no log map for callback metrics")

    def distance_batch(self, xs, ys):
        raise UnsupportedOperationError(f"{self.name}: no distance for callback metrics")

    def g_norm_batch(self, xs, vs):
        xs = np.atleast_2d(xs)
        vs = np.atleast_2d(vs)
        out = np.empty(xs.shape[0])
        for i in range(xs.shape[0]):
            g = np.asarray(self._metric_fn(xs[i]), dtype=float)
            out[i] = np.sqrt(vs[i] @ g @ vs[i])
        return out

    def dlog_sqrt_det_batch(self, xs):
        xs = np.atleast_2d(xs)
        out = np.empty_like(xs)
        for i in range(xs.shape[0]):
            c = xs[i]
            h = self._h * max(1.0, float(np.linalg.norm(c)))
            for k in range(self.dim):
                e = np.zeros(self.dim)
                e[k] = h
                lp = np.log(np.linalg.det(np.asarray(self._metric_fn(c + e))))
                lm = np.log(np.linalg.det(np.asarray(self._metric_fn(c - e))))
                out[i, k] = 0.25 * (lp - lm) / h
        return out


# -- registry -----------------------------------------------------------------

_CIRCLE = FlatTorus(1, "circle")
_TORUS2 = FlatTorus(2, "torus2")
_H2 = HyperbolicHalfPlane()
_SPHERE2 = Sphere2()
_EUCLID_CACHE: dict[int, Euclidean] = {}


def euclidean(d: int) -> Euclidean:
    if d not in _EUCLID_CACHE:
        _EUCLID_CACHE[d] = Euclidean(d)
    return _EUCLID_CACHE[d]


def circle() -> FlatTorus:
    return _CIRCLE


def torus2() -> FlatTorus:
    return _TORUS2


def hyperbolic_h2() -> HyperbolicHalfPlane:
    return _H2


def sphere2() -> Sphere2:
    return _SPHERE2


def manifold_from_string(spec: str) -> Manifold:
    """Resolve a config string: euclidean:<d>, circle, torus2, hyperbolic-h2, sphere2."""
    s = spec.strip().lower()
    if s.startswith("euclidean:"):
        return euclidean(int(s.split(":", 1)[1]))
    if s == "euclidean":
        return euclidean(1)
    table = {
        "circle": _CIRCLE,
        "torus2": _TORUS2,
        "hyperbolic-h2": _H2,
        "sphere2": _SPHERE2,
    }
    if s not in table:
        raise ValueError(f"unknown manifold {spec!r}")
    return table[s]


# -- operation-level API -------------------------------------------------------


def metric_at(m: Manifold, x: Point) -> MetricData:
    """Canonical-chart metric at x."""
    return m.metric(x)


def christoffel_at(m: Manifold, x: Point) -> np.ndarray:
    """Levi-Civita coefficients Gamma^a_{bc}, symmetric in (b, c)."""
    return m.christoffel(x)


def geodesic(m: Manifold, x: Point, v: TangentVector, t: float) -> Point:
    """Point gamma_{x,v}(t) on the geodesic with initial velocity v."""
    m._check_point(x)
    if v.base is not x and not np.array_equal(v.base.coords, x.coords):
        raise IncompatibleBaseError("velocity not based at x")
    c = m.geodesic_batch(x.coords[None, :], v.comps[None, :], float(t))[0]
    return m.point(m.wrap(c))


def log_map(m: Manifold, x: Point, y: Point) -> TangentVector:
    """Initial velocity of the shortest geodesic with gamma(0)=x, gamma(1)=y."""
    m._check_point(x)
    m._check_point(y)
    v = m.log_batch(x.coords[None, :], y.coords[None, :])[0]
    return TangentVector(x, v)


def distance(m: Manifold, x: Point, y: Point) -> float:
    """Geodesic distance."""
    m._check_point(x)
    m._check_point(y)
    return float(m.distance_batch(x.coords[None, :], y.coords[None, :])[0])


def frame_at(m: Manifold, x: Point) -> list[TangentVector]:
    """Orthonormal parallelizing frame e_1..e_d at x."""
    m._check_point(x)
    return m.frame(x)
