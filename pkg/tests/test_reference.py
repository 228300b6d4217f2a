import math

import numpy as np
import pytest

import feller as fl
from feller.errors import TruncationBudgetError, VariantIncompatibleError
from feller.grids import GridFunction
from feller.reference import (
    FdSolverSettings,
    HeatKernelId,
    _wrapped_gauss_kernel,
    exact_semigroup,
    fd_solve,
    h2_heat_kernel,
    h2_kernel_mass,
)

COS = lambda c: np.cos(c[:, 0])


def variable_circle_spec():
    circ = fl.circle()
    return fl.GeneratorSpec(
        [fl.expression_field(circ, ["1+0.3*sin(theta)"])], drift_policy="derived"
    )


# -- closed-form kernels ----------------------------------------------------------


def test_kernel_id_parsing():
    assert HeatKernelId.from_string("gauss-rd:2").d == 2
    assert HeatKernelId.from_string("sphere-harmonics:32").l_max == 32
    with pytest.raises(ValueError):
        HeatKernelId.from_string("sphere-harmonics:4")
    with pytest.raises(ValueError):
        HeatKernelId.from_string("mystery")


def test_wrapped_gauss_eigenfunction():
    k = HeatKernelId.from_string("wrapped-gauss-s1")
    for t in (0.05, 0.3, 1.0):
        for th in (0.0, 0.7, 4.0):
            got = exact_semigroup(k, COS, t, np.array([th]))
            assert got == pytest.approx(math.exp(-t / 2.0) * math.cos(th), abs=1e-11)


def test_wrapped_gauss_truncation_stable():
    # doubling the series range moves the kernel by < 1e-10
    delta = np.linspace(-np.pi, np.pi, 101)
    t = 0.05
    base = _wrapped_gauss_kernel(delta, t)
    k_max = int(math.ceil(6.0 / math.sqrt(t))) + 3
    wide = np.zeros_like(delta)
    for k in range(-2 * k_max, 2 * k_max + 1):
        wide += np.exp(-((delta + 2 * np.pi * k) ** 2) / (2.0 * t))
    wide /= math.sqrt(2 * np.pi * t)
    assert np.abs(base - wide).max() < 1e-10


def test_gauss_rd_second_moment():
    k = HeatKernelId.from_string("gauss-rd:1")
    f = lambda c: c[:, 0] ** 2
    for t in (0.1, 0.7):
        got = exact_semigroup(k, f, t, np.array([0.4]))
        assert got == pytest.approx(0.16 + t, abs=1e-12)


def test_gauss_rd_2d_product():
    k = HeatKernelId.from_string("gauss-rd:2")
    f = lambda c: np.cos(c[:, 0]) * c[:, 1]
    got = exact_semigroup(k, f, 0.5, np.array([0.3, -1.0]))
    assert got == pytest.approx(math.exp(-0.25) * math.cos(0.3) * (-1.0), abs=1e-12)


def test_torus_product_eigenfunction():
    k = HeatKernelId.from_string("torus-product")
    f = lambda c: np.cos(c[:, 0])
    got = exact_semigroup(k, f, 0.8, np.array([0.6, 2.0]))
    assert got == pytest.approx(math.exp(-0.4) * math.cos(0.6), abs=1e-10)


def test_sphere_harmonics_eigenfunctions():
    k = HeatKernelId.from_string("sphere-harmonics")
    q = np.array([0.3, -0.5, math.sqrt(1 - 0.34)])
    z = lambda c: c[:, 2]
    got = exact_semigroup(k, z, 1.0, q)
    assert got == pytest.approx(math.exp(-1.0) * q[2], abs=1e-10)
    # l = 2 harmonic: eigenvalue of (1/2) Laplacian is -3
    xy = lambda c: c[:, 0] * c[:, 1]
    got2 = exact_semigroup(k, xy, 0.5, q)
    assert got2 == pytest.approx(math.exp(-1.5) * q[0] * q[1], abs=1e-10)


def test_sphere_harmonics_truncation_guard():
    k = HeatKernelId(tag="sphere-harmonics", l_max=8)
    with pytest.raises(TruncationBudgetError):
        exact_semigroup(k, lambda c: c[:, 2], 0.01, np.array([0.0, 0.0, 1.0]))


def test_h2_kernel_mass():
    for t in (0.1, 0.25, 1.0):
        assert h2_kernel_mass(t) == pytest.approx(1.0, abs=1e-8)


def test_h2_kernel_decreasing():
    rho = np.array([0.0, 0.5, 1.0, 2.0])
    vals = h2_heat_kernel(rho, 0.3)
    assert np.all(np.diff(vals) < 0.0)
    assert np.all(vals > 0.0)


def test_h2_semigroup_preserves_constants():
    k = HeatKernelId.from_string("hyperbolic-h2")
    one = lambda c: np.ones(np.atleast_2d(c).shape[0])
    got = exact_semigroup(k, one, 0.5, np.array([0.3, 2.0]))
    assert got == pytest.approx(1.0, abs=1e-9)


def test_exact_semigroup_accepts_grid_input():
    k = HeatKernelId.from_string("wrapped-gauss-s1")
    grid = GridFunction.from_function(fl.circle(), 512, COS)
    got = exact_semigroup(k, grid, 0.4, np.array([1.1]))
    assert got == pytest.approx(math.exp(-0.2) * math.cos(1.1), abs=1e-8)


def test_exact_semigroup_rejects_nonpositive_time():
    k = HeatKernelId.from_string("wrapped-gauss-s1")
    with pytest.raises(ValueError):
        exact_semigroup(k, COS, 0.0, np.array([0.0]))


# -- finite differences ----------------------------------------------------------------


def test_fd_constants_stationary():
    spec = variable_circle_spec()
    g0 = GridFunction(fl.circle(), np.full(128, 2.5))
    out = fd_solve(spec, g0, 1.0, FdSolverSettings(steps=100))
    np.testing.assert_allclose(out.values, 2.5, atol=1e-10)


def test_fd_circle_heat_eigenfunction():
    circ = fl.circle()
    spec = fl.GeneratorSpec([fl.frame_field(circ, 1)], drift_policy="derived")
    g0 = GridFunction.from_function(circ, 512, COS)
    out = fd_solve(spec, g0, 1.0, FdSolverSettings(steps=200))
    theta = g0.node_coords()[:, 0]
    err = np.abs(out.values - math.exp(-0.5) * np.cos(theta)).max()
    assert err <= 2e-4


def test_fd_second_order_convergence():
    circ = fl.circle()
    spec = fl.GeneratorSpec([fl.frame_field(circ, 1)], drift_policy="derived")
    errs = []
    for nodes, steps in ((64, 25), (128, 50), (256, 100)):
        g0 = GridFunction.from_function(circ, nodes, COS)
        out = fd_solve(spec, g0, 0.25, FdSolverSettings(steps=steps))
        theta = g0.node_coords()[:, 0]
        errs.append(np.abs(out.values - math.exp(-0.125) * np.cos(theta)).max())
    assert 3.0 <= errs[0] / errs[1] <= 5.0
    assert 3.0 <= errs[1] / errs[2] <= 5.0


def test_fd_variable_field_self_convergence():
    spec = variable_circle_spec()
    g0 = GridFunction.from_function(fl.circle(), 512, COS)
    coarse = fd_solve(spec, g0, 0.5, FdSolverSettings(steps=200))
    g1 = GridFunction.from_function(fl.circle(), 1024, COS)
    fine = fd_solve(spec, g1, 0.5, FdSolverSettings(steps=400))
    assert np.abs(fine.values[::2] - coarse.values).max() <= 1e-4


def test_fd_mass_conservation():
    spec = variable_circle_spec()
    g0 = GridFunction.from_function(fl.circle(), 256, COS)
    out = fd_solve(spec, g0, 1.0, FdSolverSettings(steps=100))
    w = g0.volume_weights()
    drift = abs(out.values.ravel() @ w - g0.values.ravel() @ w)
    assert drift <= 1e-8


def test_fd_maximum_principle(rng):
    circ = fl.circle()
    spec = fl.GeneratorSpec(
        [fl.expression_field(circ, ["1+0.3*sin(theta)"])],
        drift_policy="derived",
        potential="-1-sin(theta)^2",
    )
    vals = np.cos(3 * np.linspace(0, 2 * np.pi, 256, endpoint=False)) + 0.2 * rng.uniform(
        -1, 1, 256
    )
    g0 = GridFunction(circ, vals)
    out = fd_solve(spec, g0, 0.5, FdSolverSettings(steps=100))
    assert out.values.max() <= vals.max() + 1e-8


def test_fd_torus_heat():
    torus = fl.torus2()
    spec = fl.GeneratorSpec(
        [fl.frame_field(torus, 1), fl.frame_field(torus, 2)], drift_policy="derived"
    )
    f = lambda c: np.cos(c[:, 0]) + 0.5 * np.sin(c[:, 1])
    g0 = GridFunction.from_function(torus, (64, 64), f)
    out = fd_solve(spec, g0, 0.5, FdSolverSettings(steps=50))
    t1, t2 = np.meshgrid(
        2 * np.pi * np.arange(64) / 64, 2 * np.pi * np.arange(64) / 64, indexing="ij"
    )
    want = math.exp(-0.25) * (np.cos(t1) + 0.5 * np.sin(t2))
    assert np.abs(out.values - want).max() <= 2e-3
    w = g0.volume_weights()
    assert abs(out.values.ravel() @ w - g0.values.ravel() @ w) <= 1e-8


def test_fd_torus_cross_terms():
    # fields with a genuine mixed second-order coefficient
    torus = fl.torus2()
    spec = fl.GeneratorSpec(
        [
            fl.constant_field(torus, [1.0, 0.5]),
            fl.constant_field(torus, [0.0, 1.0]),
        ],
        drift_policy="derived",
    )
    f = lambda c: np.cos(c[:, 0] + c[:, 1])
    g0 = GridFunction.from_function(torus, (96, 96), f)
    out = fd_solve(spec, g0, 0.4, FdSolverSettings(steps=40))
    # a = [[1, .5], [.5, 1.25]]; L cos(u) with u = t1 + t2 gives factor
    # exp(-t/2 * (a11 + 2 a12 + a22))
    lam = 0.5 * (1.0 + 2 * 0.5 + 1.25)
    t1, t2 = np.meshgrid(
        2 * np.pi * np.arange(96) / 96, 2 * np.pi * np.arange(96) / 96, indexing="ij"
    )
    want = math.exp(-lam * 0.4) * np.cos(t1 + t2)
    assert np.abs(out.values - want).max() <= 2e-3


def test_fd_rejects_large_time_step():
    spec = variable_circle_spec()
    g0 = GridFunction.from_function(fl.circle(), 64, COS)
    with pytest.raises(ValueError):
        fd_solve(spec, g0, 1.0, FdSolverSettings(steps=10))


def test_fd_rejects_sphere():
    s2 = fl.sphere2()
    spec = fl.GeneratorSpec([fl.rotational_field(s2, k) for k in (1, 2, 3)])
    g0 = GridFunction.from_function(s2, (16, 32), lambda c: c[:, 2], interp="linear")
    with pytest.raises(VariantIncompatibleError):
        fd_solve(spec, g0, 0.1, FdSolverSettings(steps=20))
