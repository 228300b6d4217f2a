"""Chernoff shift-operator families S(t) and the iterated composition S(t/n)^n.

The general family averages function values along integral curves of the
generator's fields,

    (S(t)f)(x) = 1/(4r) sum_j [ f(gamma_{x,A_j}(sqrt(2rt)))
                              + f(gamma_{x,-A_j}(sqrt(2rt))) ]
               + 1/2 f(gamma_{x,A_0}(2t)) + t c(x) f(x),

and satisfies S(t)f = f + t (L f) + o(t), so S(t/n)^n converges to the
semigroup generated by L.  Variants:

* ``GENERAL`` - the family above;
* ``DRIFTLESS_CORRECTED`` - drift-free form with weights 1/(2r) and flow
  time sqrt(rt): consistent with the same generator;
* ``DRIFTLESS_LITERAL`` - drift-free form with weights 1/(2r) but flow time
  sqrt(2rt).  Its first-order expansion is f + 2t L f, i.e. it approximates
  the semigroup at double speed; it is provided so the discrepancy can be
  measured (see ``consistency_defect``), not silently repaired;
* ``HEAT_GEODESIC`` - geodesic steps with initial velocities
  +-sqrt(d) e_k for time sqrt(t), weights 1/(2d), realizing half the
  Laplace-Beltrami operator on parallelizable manifolds.

Three evaluation strategies for S(t/n)^n f: exact tree recursion
(``iterate_tree``, the oracle), semi-Lagrangian grid sweeps
(``iterate_grid``) and Monte-Carlo path sampling (``iterate_mc``).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from ._kernels import step_uniforms, substream
from .errors import BudgetExceededError, VariantIncompatibleError
from .fields import GeneratorSpec
from .flows import DEFAULT_ODE, OdeSettings, flow_batch, negate
from .grids import GridFunction
from .manifolds import Point

DEFAULT_TREE_BUDGET = 10**7


class ChernoffVariant(enum.Enum):
    GENERAL = "general"
    DRIFTLESS_CORRECTED = "driftless-corrected"
    DRIFTLESS_LITERAL = "driftless-literal"
    HEAT_GEODESIC = "heat-geodesic"

    @classmethod
    def from_string(cls, s: str) -> "ChernoffVariant":
        key = s.strip().lower().replace("_", "-")
        for v in cls:
            if v.value == key:
                return v
        raise ValueError(f"unknown Chernoff variant {s!r}")


@dataclass(frozen=True)
class BranchSet:
    """Shifted evaluation points and weights for one application of S(t)."""

    points: list
    weights: np.ndarray
    potential_term: float


def _require_driftless(spec: GeneratorSpec, variant: ChernoffVariant):
    if spec.potential is not None:
        raise VariantIncompatibleError(f"{variant.value} requires c = 0")
    if not (spec.drift_policy == "explicit" and spec.drift.is_zero):
        raise VariantIncompatibleError(f"{variant.value} requires A_0 = 0")


def branch_moves(
    spec: GeneratorSpec,
    variant: ChernoffVariant,
    t: float,
    ode: OdeSettings = DEFAULT_ODE,
):
    """Branch move maps and exact weights for one application of S(t).

    Returns ``(moves, weights)`` where each move sends a coordinate batch to
    its shifted batch and the weights are assembled as exact rationals.
    """
    if t < 0.0:
        raise ValueError("S(t) requires t >= 0")
    m = spec.manifold
    moves: list[Callable[[np.ndarray], np.ndarray]] = []
    weights: list[Fraction] = []

    def flow_move(field, tau):
        return lambda coords: flow_batch(field, coords, tau, ode)

    if variant is ChernoffVariant.GENERAL:
        r = spec.r
        tau = math.sqrt(2.0 * r * t)
        for f in spec.fields:
            moves.append(flow_move(f, tau))
            weights.append(Fraction(1, 4 * r))
            moves.append(flow_move(negate(f), tau))
            weights.append(Fraction(1, 4 * r))
        moves.append(flow_move(spec.drift_field(), 2.0 * t))
        weights.append(Fraction(1, 2))
    elif variant in (ChernoffVariant.DRIFTLESS_CORRECTED, ChernoffVariant.DRIFTLESS_LITERAL):
        _require_driftless(spec, variant)
        r = spec.r
        tau = math.sqrt((r if variant is ChernoffVariant.DRIFTLESS_CORRECTED else 2.0 * r) * t)
        for f in spec.fields:
            moves.append(flow_move(f, tau))
            weights.append(Fraction(1, 2 * r))
            moves.append(flow_move(negate(f), tau))
            weights.append(Fraction(1, 2 * r))
    elif variant is ChernoffVariant.HEAT_GEODESIC:
        if spec.potential is not None:
            raise VariantIncompatibleError("heat-geodesic requires c = 0")
        if not m.parallelizable:
            raise VariantIncompatibleError(
                f"heat-geodesic requires a parallelizable manifold, not {m.name}"
            )
        d = m.dim
        root_d = math.sqrt(d)
        root_t = math.sqrt(t)

        def geo_move(k, sign):
            def move(coords):
                frame = m.frame_batch(np.atleast_2d(coords))
                out = m.geodesic_batch(
                    np.atleast_2d(coords), sign * root_d * frame[k], root_t
                )
                return m.wrap(out)

            return move

        for k in range(d):
            moves.append(geo_move(k, +1.0))
            weights.append(Fraction(1, 2 * d))
            moves.append(geo_move(k, -1.0))
            weights.append(Fraction(1, 2 * d))
    else:  # pragma: no cover
        raise ValueError(variant)

    assert sum(weights) == 1
    return moves, weights


def branch_set(
    spec: GeneratorSpec,
    variant: ChernoffVariant,
    t: float,
    x: Point,
    ode: OdeSettings = DEFAULT_ODE,
) -> BranchSet:
    """Shifted points, weights and potential term of S(t) at x."""
    spec.manifold._check_point(x)
    moves, weights = branch_moves(spec, variant, t, ode)
    c = x.coords[None, :]
    pts = [spec.manifold.point(spec.manifold.wrap(mv(c)[0])) for mv in moves]
    pot = 0.0
    if variant is ChernoffVariant.GENERAL and spec.potential is not None:
        pot = t * float(spec.potential_values(c)[0])
    return BranchSet(points=pts, weights=np.array([float(w) for w in weights]), potential_term=pot)


def apply_S_batch(
    spec: GeneratorSpec,
    variant: ChernoffVariant,
    t: float,
    f: Callable[[np.ndarray], np.ndarray],
    coords: np.ndarray,
    ode: OdeSettings = DEFAULT_ODE,
) -> np.ndarray:
    """(S(t)f) evaluated at a batch of coordinate rows."""
    coords = np.atleast_2d(coords)
    moves, weights = branch_moves(spec, variant, t, ode)
    acc = np.zeros(coords.shape[0])
    for mv, w in zip(moves, weights):
        acc += float(w) * np.asarray(f(mv(coords)), dtype=float)
    if variant is ChernoffVariant.GENERAL and spec.potential is not None:
        acc += t * spec.potential_values(coords) * np.asarray(f(coords), dtype=float)
    return acc


def apply_S(
    spec: GeneratorSpec,
    variant: ChernoffVariant,
    t: float,
    f: Callable[[np.ndarray], np.ndarray],
    x: Point,
    ode: OdeSettings = DEFAULT_ODE,
) -> float:
    """(S(t)f)(x) = sum_i w_i f(p_i) + t c(x) f(x)."""
    spec.manifold._check_point(x)
    return float(apply_S_batch(spec, variant, t, f, x.coords[None, :], ode)[0])


def iterate_tree(
    spec: GeneratorSpec,
    variant: ChernoffVariant,
    t: float,
    n: int,
    f: Callable[[np.ndarray], np.ndarray],
    x: Point,
    budget: int = DEFAULT_TREE_BUDGET,
    ode: OdeSettings = DEFAULT_ODE,
) -> float:
    """Exact (S(t/n)^n f)(x) by full expansion of the branch tree.

    Breadth-first expansion over coordinate/weight arrays; deterministic and
    bit-reproducible for fixed ode settings.  The leaf count is
    ``branches^n`` (+1 branch when a potential is present) and must stay
    within ``budget``.
    """
    spec.manifold._check_point(x)
    if n < 1:
        raise ValueError("n must be >= 1")
    dt = t / n
    moves, wfrac = branch_moves(spec, variant, dt, ode)
    has_pot = variant is ChernoffVariant.GENERAL and spec.potential is not None
    b = len(moves) + (1 if has_pot else 0)
    if b**n > budget:
        raise BudgetExceededError(
            f"{b}^{n} leaf evaluations exceed the budget of {budget}"
        )
    weights = [float(w) for w in wfrac]
    pts = x.coords[None, :].copy()
    wts = np.ones(1)
    for _ in range(n):
        blocks = [mv(pts) for mv in moves]
        wblocks = [w * wts for w in weights]
        if has_pot:
            blocks.append(pts)
            wblocks.append(dt * spec.potential_values(pts) * wts)
        pts = np.concatenate(blocks, axis=0)
        wts = np.concatenate(wblocks)
    return float(np.asarray(f(pts), dtype=float) @ wts)


def iterate_grid(
    spec: GeneratorSpec,
    variant: ChernoffVariant,
    t: float,
    n: int,
    f0: GridFunction,
    ode: OdeSettings = DEFAULT_ODE,
) -> GridFunction:
    """n semi-Lagrangian sweeps of S(t/n) applied to a grid function.

    The branch displacement of every node is precomputed once (the fields
    are autonomous), so each sweep is a handful of stencil gathers:
    cost O(n * nodes * branches).
    """
    if f0.manifold is not spec.manifold:
        raise VariantIncompatibleError("grid and generator live on different manifolds")
    if n < 1:
        raise ValueError("n must be >= 1")
    dt = t / n
    moves, wfrac = branch_moves(spec, variant, dt, ode)
    weights = [float(w) for w in wfrac]
    nodes = f0.node_coords()
    stencils = []
    max_disp = 0.0
    for mv in moves:
        target = mv(nodes)
        max_disp = max(max_disp, float(spec.manifold.distance_batch(nodes, target).max()))
        stencils.append(f0.build_stencil(target))
    if f0.interp == "linear" and 0.0 < max_disp < f0.cell_size():
        warnings.warn(
            "branch displacement below one grid cell with linear interpolation; "
            "results may be dominated by interpolation error",
            stacklevel=2,
        )
    pot = None
    if variant is ChernoffVariant.GENERAL and spec.potential is not None:
        pot = dt * spec.potential_values(nodes)
    values = f0.values.ravel().copy()
    for _ in range(n):
        flat = f0.flat_values(values)
        new = weights[0] * stencils[0].apply(flat)
        for w, st in zip(weights[1:], stencils[1:]):
            new += w * st.apply(flat)
        if pot is not None:
            new += pot * values
        values = new
    return f0.with_values(values)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    samples: int
    seed: int


def iterate_mc(
    spec: GeneratorSpec,
    variant: ChernoffVariant,
    t: float,
    n: int,
    f: Callable[[np.ndarray], np.ndarray],
    x: Point,
    samples: int,
    seed: int,
    ode: OdeSettings = DEFAULT_ODE,
) -> McEstimate:
    """Monte-Carlo estimate of (S(t/n)^n f)(x).

    One branch is drawn per step with probability equal to its weight; with a
    potential present the multiplicative factor (1 + (t/n) c(state)) is
    accumulated along the path.  For c = 0 this is an unbiased estimator of
    ``iterate_tree``; substreams are derived statelessly from
    (seed, path index), so results are reproducible and independent of any
    worker decomposition.
    """
    spec.manifold._check_point(x)
    if samples < 2:
        raise ValueError("samples must be >= 2")
    dt = t / n
    moves, wfrac = branch_moves(spec, variant, dt, ode)
    cumw = np.cumsum([float(w) for w in wfrac])
    cumw[-1] = 1.0
    coords = np.broadcast_to(x.coords, (samples, x.coords.shape[0])).copy()
    streams = substream(seed, np.arange(samples))
    has_pot = variant is ChernoffVariant.GENERAL and spec.potential is not None
    factor = np.ones(samples) if has_pot else None
    for step in range(n):
        u = step_uniforms(streams, step)
        branch = np.searchsorted(cumw, u, side="right")
        if has_pot:
            factor *= 1.0 + dt * spec.potential_values(coords)
        for b, mv in enumerate(moves):
            mask = branch == b
            if np.any(mask):
                coords[mask] = mv(coords[mask])
    vals = np.asarray(f(coords), dtype=float)
    if has_pot:
        vals = vals * factor
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(samples))
    return McEstimate(mean=mean, stderr=stderr, samples=samples, seed=seed)


def consistency_defect(
    spec: GeneratorSpec,
    variant: ChernoffVariant,
    t: float,
    f: Callable[[np.ndarray], np.ndarray],
    sample: Sequence[Point],
    f_grad=None,
    f_hess=None,
    ode: OdeSettings = DEFAULT_ODE,
) -> float:
    """max over the sample of |(S(t)f - f)/t - (L_0 f + c f)|.

    Measures the first-order consistency of the Chernoff family with the
    generator; O(t) for the consistent variants, and converging to the
    non-zero residual |L_0 f| for the literal driftless form.
    """
    from .fields import apply_generator

    if t <= 0.0:
        raise ValueError("consistency_defect requires t > 0")
    coords = np.stack([p.coords for p in sample])
    s_vals = apply_S_batch(spec, variant, t, f, coords, ode)
    f_vals = np.asarray(f(coords), dtype=float)
    gen = np.array(
        [apply_generator(spec, f, p, f_grad=f_grad, f_hess=f_hess) for p in sample]
    )
    return float(np.abs((s_vals - f_vals) / t - gen).max())
