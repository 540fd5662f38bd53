import math

import numpy as np
import pytest

from heatlab import (
    ClosedFormKernel,
    Domain,
    Field,
    Grid,
    Kernel1D,
    ParameterError,
    TruncationError,
    offdiag_decay_probe,
    semigroup_check,
)

INTERVAL = Domain.interval(1.0)
CHANNEL = Domain.channel(2 * math.pi, 1.0)


@pytest.fixture(scope="module")
def ikernel():
    return ClosedFormKernel(INTERVAL)


@pytest.fixture(scope="module")
def igrid():
    return Grid(INTERVAL, 512)


def test_free_normalization():
    k = Kernel1D(40.0, "half", "free")
    t = 1.0 / (4.0 * math.pi)
    assert math.isclose(k.eval(t, 0.3, 0.3)[0, 0], 1.0, rel_tol=1e-14)


def test_half_line_neumann_at_origin():
    # substitute both scaled coordinates = 0 in the reflected formula:
    # (4 pi t)^{-1/2} (1 + 1)
    k = Kernel1D(40.0, "half", "neumann")
    want = 2.0 / math.sqrt(4.0 * math.pi)
    assert math.isclose(k.eval(1.0, 0.0, 0.0)[0, 0], want, rel_tol=1e-14)


def test_half_line_dirichlet_vanishes_at_wall():
    k = Kernel1D(40.0, "half", "dirichlet")
    ys = np.linspace(0.1, 3.0, 7)
    assert np.max(np.abs(k.eval(0.5, np.zeros(1), ys))) < 1e-16


def test_half_line_truncation_guard():
    k = Kernel1D(5.0, "half", "neumann")
    with pytest.raises(TruncationError):
        k.eval(1.0, 0.0, 0.0)


def test_t_nonpositive_rejected(ikernel):
    with pytest.raises(ParameterError):
        ikernel.eval_scalar(0.0, [0.5], [0.5])


@pytest.mark.parametrize("t", [1e-3, 1e-2, 0.04, 0.06, 0.3, 1.0])
def test_interval_image_vs_eigen(t):
    # two independent representations of the same Neumann kernel
    k = Kernel1D(1.0, "closed", "neumann")
    xs = np.linspace(0.0, 1.0, 41)
    a = k.eval(t, xs, xs, rep="image")
    b = k.eval(t, xs, xs, rep="eigen")
    assert np.max(np.abs(a - b)) < 1e-10


def test_symmetry(ikernel):
    xs = np.linspace(0.0, 1.0, 23)
    for t in (1e-3, 0.1, 0.7):
        M = ikernel.factors()[0].eval(t, xs, xs)
        assert np.max(np.abs(M - M.T)) < 1e-14 * np.max(np.abs(M))


def test_neumann_normal_derivative_cancels(ikernel):
    k = ikernel.factors()[0]
    ys = np.linspace(0.0, 1.0, 33)
    for t in (1e-3, 1e-2, 0.1):
        d0 = k.eval(t, np.array([0.0]), ys, dx=1)
        d1 = k.eval(t, np.array([1.0]), ys, dx=1)
        assert np.max(np.abs(d0)) < 1e-10
        assert np.max(np.abs(d1)) < 1e-10


def test_dirichlet_vanishes_at_boundary():
    k = Kernel1D(1.0, "closed", "dirichlet")
    ys = np.linspace(0.05, 0.95, 19)
    for t in (1e-3, 0.02):
        v = k.eval(t, np.array([0.0, 1.0]), ys)
        assert np.max(np.abs(v)) < 1e-14


def test_conservation(ikernel, igrid):
    ones = Field.scalar(igrid, np.ones(igrid.shape))
    for t in (1e-3, 0.05, 0.5):
        out = ikernel.apply_heat(ones, t).components[0]
        assert np.max(np.abs(out - 1.0)) < 1e-10


def test_identity_at_zero(ikernel, igrid):
    f = Field.scalar(igrid, np.cos(3 * np.pi * igrid.coords[0]))
    out = ikernel.apply_heat(f, 0.0)
    np.testing.assert_array_equal(out.components[0], f.components[0])


def test_eigenfunction_decay(ikernel, igrid):
    y = igrid.coords[0]
    f = Field.scalar(igrid, np.cos(np.pi * y))
    for t in (0.01, 0.2):
        out = ikernel.apply_heat(f, t).components[0]
        want = math.exp(-math.pi ** 2 * t) * np.cos(np.pi * y)
        assert np.max(np.abs(out - want)) < 1e-8


def test_l2_contraction(ikernel, igrid):
    rng = np.random.default_rng(7)
    coef = rng.standard_normal(12)
    y = igrid.coords[0]
    f = Field.scalar(igrid, sum(c * np.cos(k * np.pi * y) for k, c in enumerate(coef)))
    n0 = f.l_p(2.0)
    prev = n0
    for t in (0.01, 0.05, 0.2):
        cur = ikernel.apply_heat(f, t).l_p(2.0)
        assert cur <= prev * (1 + 1e-12)
        prev = cur


def test_semigroup_eigen(ikernel, igrid):
    f = Field.scalar(igrid, np.cos(np.pi * igrid.coords[0]))
    assert semigroup_check(ikernel, f, 0.1, 0.1) < 1e-8


def test_semigroup_random_smooth(ikernel, igrid):
    rng = np.random.default_rng(3)
    y = igrid.coords[0]
    f = Field.scalar(igrid, sum(rng.standard_normal() * np.cos(k * np.pi * y)
                                for k in range(9)))
    assert semigroup_check(ikernel, f, 0.05, 0.15) < 1e-6


def test_semigroup_needs_positive_times(ikernel, igrid):
    f = Field.scalar(igrid, np.ones(igrid.shape))
    with pytest.raises(ParameterError):
        semigroup_check(ikernel, f, 0.0, 0.1)


def test_budget_tail(ikernel):
    assert ikernel.factors()[0].tail_ok(1.0)
    assert ikernel.factors()[0].tail_ok(1e-3)


# ---------------------------------------------------------------- 1-form


@pytest.fixture(scope="module")
def fkernel():
    return ClosedFormKernel(CHANNEL, degree=1)


def test_form_kernel_normal_vanishes_on_wall(fkernel):
    vals = fkernel.eval_form(1.0, (0.0, 0.0), (0.0, 0.0))
    assert vals[1] == 0.0          # dirichlet factor at the wall
    assert vals[0] > 0.0           # tangential neumann component


def test_form_kernel_interior_positive(fkernel):
    vals = fkernel.eval_form(0.3, (1.0, 0.5), (2.0, 0.4))
    assert np.all(vals > 0.0)


def test_form_kernel_symmetric(fkernel):
    a = fkernel.eval_form(0.2, (1.0, 0.3), (2.5, 0.6))
    b = fkernel.eval_form(0.2, (2.5, 0.6), (1.0, 0.3))
    np.testing.assert_allclose(a, b, rtol=1e-13)


def test_form_kernel_rejects_degree_zero(fkernel):
    with pytest.raises(ParameterError):
        fkernel.eval_scalar(0.1, (0.0, 0.5), (0.0, 0.5))


def test_form_heat_preserves_tangent_eigenfield():
    grid = Grid(CHANNEL, (64, 65))
    kern = ClosedFormKernel(CHANNEL, degree=1)
    X, Y = np.meshgrid(*grid.coords, indexing="ij")
    kx, ky = 2.0, math.pi
    ux = ky * np.sin(kx * X) * np.cos(ky * Y)
    uy = -kx * np.cos(kx * X) * np.sin(ky * Y)
    f = Field.vector(grid, (ux, uy))
    t = 0.05
    out = kern.apply_heat(f, t)
    lam = math.exp(-(kx ** 2 + ky ** 2) * t)
    np.testing.assert_allclose(out.components[0], lam * ux, atol=1e-9)
    np.testing.assert_allclose(out.components[1], lam * uy, atol=1e-9)


# ---------------------------------------------------------------- probes


def test_probe_free_exact():
    dom = Domain.half_line(40.0)
    kern = ClosedFormKernel(dom, bc="free")
    ts = np.geomspace(1e-3, 0.5, 10)
    rep = offdiag_decay_probe(kern, (3.0,), (4.0,), ts)
    assert rep.separation == 1.0
    assert rep.rel_gap < 1e-10
    assert not rep.underflowed


def test_probe_interval_neumann():
    kern = ClosedFormKernel(INTERVAL)
    ts = np.geomspace(1e-3, 1e-2, 9)
    rep = offdiag_decay_probe(kern, (0.3,), (0.7,), ts)
    assert rep.target == pytest.approx(0.04)
    assert rep.rel_gap < 0.05


def test_probe_circle_geodesic():
    kern = ClosedFormKernel(Domain.circle(1.0))
    ts = np.geomspace(5e-4, 5e-3, 9)
    rep = offdiag_decay_probe(kern, (0.1,), (0.8,), ts)
    # geodesic separation wraps: d = 0.3
    assert rep.separation == pytest.approx(0.3)
    assert rep.rel_gap < 0.05


def test_probe_channel_tangential():
    kern = ClosedFormKernel(CHANNEL, degree=1)
    ts = np.geomspace(1e-3, 2e-2, 10)
    rep = offdiag_decay_probe(kern, (1.0, 0.4), (1.3, 0.8), ts, comp=0)
    assert rep.rel_gap < 0.05


def test_probe_underflow_flagged():
    kern = ClosedFormKernel(INTERVAL)
    ts = np.concatenate([np.geomspace(1e-6, 1e-5, 8), [1e-3]])
    rep = offdiag_decay_probe(kern, (0.1,), (0.9,), ts)
    assert rep.underflowed
