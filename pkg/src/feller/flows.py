"""Integral curves of vector fields and the distance-monotonicity horizon.

Two engines back the flow maps:

* ``integral_curve`` - the point-level operation, adaptive Cash-Karp RK45
  by default (or fixed-step RK4 with a Richardson error estimate);
* ``flow_batch`` - the vectorized hot path used by the Chernoff branch and
  walk samplers: fixed-step RK4 over the whole batch, with the step count
  doubled until a Richardson comparison meets the tolerance.

Fields that carry an exact flow map (constants, frame fields of the
built-ins, sphere rotations) short-circuit both engines, which keeps the
quadratic-exactness checks exact to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import StepLimitExceededError
from .fields import VectorField
from .manifolds import Manifold, Point, Sphere2

_DEFAULT_TOL = 1e-9
_DEFAULT_MAX_STEPS = 10**6


@dataclass(frozen=True)
class OdeSettings:
    """Integrator configuration.

    ``method`` is ``"rk45"`` (adaptive, default) or ``"rk4"`` (fixed step).
    ``h_init`` defaults to ``t / 16`` at call time when ``None``.
    """

    method: str = "rk45"
    h_init: Optional[float] = None
    tol: float = _DEFAULT_TOL
    max_steps: int = _DEFAULT_MAX_STEPS

    def __post_init__(self):
        if self.method not in ("rk45", "rk4"):
            raise ValueError(f"unknown ODE method {self.method!r}")
        if self.tol <= 0.0:
            raise ValueError("tol must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


DEFAULT_ODE = OdeSettings()


@dataclass(frozen=True)
class FlowResult:
    endpoint: Point
    steps_taken: int
    est_error: float


def negate(A: VectorField) -> VectorField:
    """The field -A (flows run backwards)."""
    flow = None
    if A.flow is not None:
        flow = lambda c, t: A.flow(c, -t)
    return VectorField(
        A.manifold,
        lambda c: -A._comps(np.atleast_2d(c)),
        jacobian=(lambda c: -A.jacobian(np.atleast_2d(c))) if A.jacobian else None,
        flow=flow,
        declared_bounds=A.declared_bounds,
        name=f"-({A.name})",
        is_zero=A.is_zero,
    )


def _rhs(A: VectorField, m: Manifold):
    if isinstance(m, Sphere2):
        # keep stage states admissible for the components callback
        def rhs(c):
            q = c / np.linalg.norm(c, axis=-1, keepdims=True)
            return A.comps(q)

        return rhs
    return A.comps


def _post(m: Manifold, c: np.ndarray) -> np.ndarray:
    if isinstance(m, Sphere2):
        return c / np.linalg.norm(c, axis=-1, keepdims=True)
    return m.wrap(c)


def _check_domain(m: Manifold, c: np.ndarray):
    if m.name == "hyperbolic-h2" and np.any(c[..., 1] <= 0.0):
        raise StepLimitExceededError(
            "hyperbolic-h2: integral curve left the chart domain y > 0"
        )
    if not np.all(np.isfinite(c)):
        raise StepLimitExceededError("integral curve diverged (non-finite state)")


def _rk4_fixed(A: VectorField, coords: np.ndarray, t: float, steps: int) -> np.ndarray:
    rhs = _rhs(A, A.manifold)
    h = t / steps
    c = coords.astype(float).copy()
    for _ in range(steps):
        k1 = rhs(c)
        k2 = rhs(c + 0.5 * h * k1)
        k3 = rhs(c + 0.5 * h * k2)
        k4 = rhs(c + h * k3)
        c = c + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if isinstance(A.manifold, Sphere2):
            c = c / np.linalg.norm(c, axis=-1, keepdims=True)
    _check_domain(A.manifold, c)
    return c


def flow_batch(
    A: VectorField, coords: np.ndarray, t: float, ode: OdeSettings = DEFAULT_ODE
) -> np.ndarray:
    """Endpoints of the integral curves of A after time t, for a batch of starts.

    Uses the exact flow when the field has one; otherwise fixed-step RK4 with
    step doubling until the Richardson error estimate meets ``ode.tol``.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    if t == 0.0 or A.is_zero:
        return _post(A.manifold, coords.copy())
    if A.flow is not None:
        out = A.flow(coords, t)
        _check_domain(A.manifold, out)
        return _post(A.manifold, out)
    h0 = ode.h_init if ode.h_init is not None else abs(t) / 16.0
    steps = max(1, min(int(math.ceil(abs(t) / max(h0, 1e-300))), ode.max_steps))
    tol = ode.tol * max(1.0, abs(t))
    coarse = _rk4_fixed(A, coords, t, steps)
    while True:
        fine = _rk4_fixed(A, coords, t, 2 * steps)
        err = float(np.max(np.abs(fine - coarse))) / 15.0
        if err <= tol or 2 * steps >= ode.max_steps:
            if err > tol:
                raise StepLimitExceededError(
                    f"flow_batch: error {err:.2e} > tol {tol:.2e} at max_steps"
                )
            return _post(A.manifold, fine)
        coarse = fine
        steps *= 2


# -- adaptive Cash-Karp RK45 (single trajectory) --------------------------------

_CK_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (3 / 10, -9 / 10, 6 / 5),
    (-11 / 54, 5 / 2, -70 / 27, 35 / 27),
    (1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096),
)
_CK_B5 = (37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771)
_CK_B4 = (2825 / 27648, 0.0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4)


def _rk45_adaptive(A: VectorField, c0: np.ndarray, t: float, ode: OdeSettings):
    rhs = _rhs(A, A.manifold)

    def f(c):
        return rhs(c[None, :])[0]

    c = c0.astype(float).copy()
    h = ode.h_init if ode.h_init is not None else t / 16.0
    h = min(h, t)
    tol_rate = ode.tol * max(1.0, t) / t  # error budget per unit time
    elapsed = 0.0
    acc_err = 0.0
    steps = 0
    k = [np.zeros_like(c) for _ in range(6)]
    while elapsed < t:
        if steps >= ode.max_steps:
            raise StepLimitExceededError(
                f"integral_curve: exceeded max_steps={ode.max_steps}"
            )
        h = min(h, t - elapsed)
        k[0] = f(c)
        for i in range(1, 6):
            ci = c + h * sum(a * k[j] for j, a in enumerate(_CK_A[i]))
            k[i] = f(ci)
        c5 = c + h * sum(b * ki for b, ki in zip(_CK_B5, k))
        c4 = c + h * sum(b * ki for b, ki in zip(_CK_B4, k))
        err = float(np.max(np.abs(c5 - c4)))
        budget = tol_rate * h
        if err <= budget or h <= 1e-15 * max(1.0, t):
            elapsed += h
            c = c5
            if isinstance(A.manifold, Sphere2):
                c = c / np.linalg.norm(c)
            acc_err += err
            steps += 1
            _check_domain(A.manifold, c)
        factor = 0.9 * (budget / err) ** 0.2 if err > 0 else 5.0
        h *= min(5.0, max(0.2, factor))
    return c, steps, acc_err


def integral_curve(
    A: VectorField, x: Point, t: float, settings: OdeSettings = DEFAULT_ODE
) -> FlowResult:
    """Endpoint of the maximal integral curve of A started at x, after time t."""
    m = A.manifold
    m._check_point(x)
    if t < 0.0:
        raise ValueError("integral_curve expects t >= 0")
    if t == 0.0 or A.is_zero:
        return FlowResult(x, 0, 0.0)
    if A.flow is not None:
        c = A.flow(x.coords[None, :], t)[0]
        _check_domain(m, c[None, :])
        return FlowResult(m.point(m.wrap(c)), 1, 0.0)
    if settings.method == "rk4":
        h0 = settings.h_init if settings.h_init is not None else t / 16.0
        steps = max(1, int(math.ceil(t / h0)))
        if steps > settings.max_steps:
            raise StepLimitExceededError(
                f"integral_curve: {steps} steps exceed max_steps"
            )
        coarse = _rk4_fixed(A, x.coords[None, :], t, steps)[0]
        fine = _rk4_fixed(A, x.coords[None, :], t, 2 * steps)[0]
        est = float(np.max(np.abs(fine - coarse)))
        return FlowResult(m.point(m.wrap(coarse)), steps, est)
    c, steps, err = _rk45_adaptive(A, x.coords, t, settings)
    return FlowResult(m.point(m.wrap(c)), steps, err)


# -- distance monotonicity -------------------------------------------------------


def monotone_distance_horizon(M2: float, d: int) -> float:
    """Supremum of the horizon T < ln(1 + 1/d) / (M2 sqrt(d)).

    Flows of a field whose chart-level derivative bound is M2 have
    non-decreasing distance from their start on [0, T].
    """
    if M2 <= 0.0:
        raise ValueError("M2 must be > 0")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return math.log(1.0 + 1.0 / d) / (M2 * math.sqrt(d))


@dataclass(frozen=True)
class MonotonicityReport:
    violations: int
    worst_decrease: float
    horizon: float          # the T actually swept
    stated_horizon: Optional[float]  # ln(1+1/d)/(M2 sqrt d) when m2 was supplied
    within_horizon: Optional[bool]
    starts: int
    steps: int


def verify_distance_monotonicity(
    A: VectorField,
    starts: Sequence[Point],
    T: float,
    steps: int,
    m2: Optional[float] = None,
    ode: Optional[OdeSettings] = None,
    tol: float = 1e-9,
) -> MonotonicityReport:
    """Sweep t -> d(gamma(0), gamma(t)) on [0, T] and count strict decreases.

    ``m2`` is the caller-supplied chart-level derivative bound; when given,
    the implied horizon is recorded in the report (respecting it is the
    caller's responsibility).
    """
    coords = np.stack([p.coords for p in starts])
    m = A.manifold
    ode = ode or OdeSettings(tol=1e-12)
    ts = np.linspace(0.0, T, steps)
    current = coords.copy()
    dists = np.zeros((steps, coords.shape[0]))
    for i in range(1, steps):
        current = flow_batch(A, current, ts[i] - ts[i - 1], ode)
        dists[i] = m.distance_batch(coords, current)
    drops = dists[:-1] - dists[1:]
    violations = int(np.sum(drops > tol))
    worst = float(max(0.0, drops.max())) if drops.size else 0.0
    stated = monotone_distance_horizon(m2, m.dim) if m2 is not None else None
    return MonotonicityReport(
        violations=violations,
        worst_decrease=worst,
        horizon=T,
        stated_horizon=stated,
        within_horizon=(T <= stated) if stated is not None else None,
        starts=coords.shape[0],
        steps=steps,
    )
