import math

import numpy as np
import pytest

from heatlab import ClosedFormKernel, Domain, Field, Grid, ParameterError
from heatlab.battery import (
    boundary_bump,
    constant,
    eigen_mode,
    lacunary,
    lipschitz_kink,
    random_trig,
    scalar_battery,
)
from heatlab.lp_analysis import (
    band,
    besov_heat_norm,
    classify_tail,
    dyadic_range,
    global_bernstein_check,
    local_bernstein_check,
    pointwise_multiplier_check,
    project_high,
    project_leq,
    vanishing_diagnostic,
    vmo_modulus,
    vmo_vs_heat_compare,
)
from heatlab.onsager import CutoffFamily

INTERVAL = Domain.interval(1.0)


@pytest.fixture(scope="module")
def igrid():
    return Grid(INTERVAL, 1025)


@pytest.fixture(scope="module")
def ikernel():
    return ClosedFormKernel(INTERVAL)


@pytest.fixture(scope="module")
def ibattery(igrid):
    return scalar_battery(igrid, p=3.0, J=7, seed=3)


# ------------------------------------------------------------ projections


def test_project_leq_eigen_identity(ikernel, igrid):
    k = 3
    f = eigen_mode(igrid, k)
    N = 16.0
    out = project_leq(ikernel, f, N)
    lam = (k * math.pi) ** 2
    want = math.exp(-lam / N ** 2) * f.components[0]
    np.testing.assert_allclose(out.components[0], want, atol=1e-10)


def test_band_amplitude_at_matched_frequency(ikernel, igrid):
    # at N = k pi the band factor is exactly e^{-1} - e^{-4}
    k = 8
    f = eigen_mode(igrid, k)
    N = k * math.pi
    out = band(ikernel, f, N)
    want = (math.exp(-1.0) - math.exp(-4.0)) * f.components[0]  # 0.3495638...
    np.testing.assert_allclose(out.components[0], want, atol=1e-9)


def test_band_of_constant_vanishes(ikernel, igrid):
    f = constant(igrid)
    out = band(ikernel, f, 8.0)
    assert np.max(np.abs(out.components[0])) < 1e-13


def test_telescoping_exact(ikernel, igrid):
    f = ibattery_field = random_trig(igrid, modes=12, seed=4)
    K_top = 64.0
    total = project_leq(ikernel, f, 1.0).components[0].copy()
    N = 2.0
    while N <= K_top:
        total += band(ikernel, f, N).components[0]
        N *= 2.0
    direct = project_leq(ikernel, f, K_top).components[0]
    np.testing.assert_allclose(total, direct, atol=1e-12)


def test_low_pass_converges_to_field(ikernel, igrid):
    # L^p convergence at the heat-tail rate lambda_max / N^2
    f = random_trig(igrid, modes=9, seed=1)
    errs = [project_high(ikernel, f, N).l_p(3.0) for N in (32.0, 64.0, 128.0)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[1] / errs[2] > 3.5   # tail ~ lambda / N^2
    assert errs[2] < 0.05 * f.l_p(3.0)


def test_semigroup_compatibility(ikernel, igrid):
    f = random_trig(igrid, modes=9, seed=2)
    N1, N2 = 8.0, 4.0
    two = project_leq(ikernel, project_leq(ikernel, f, N2), N1)
    combined = (N1 ** -2 + N2 ** -2) ** -0.5
    one = project_leq(ikernel, f, combined)
    np.testing.assert_allclose(two.components[0], one.components[0], atol=1e-11)


def test_project_rejects_bad_frequency(ikernel, igrid):
    f = constant(igrid)
    with pytest.raises(ParameterError):
        project_leq(ikernel, f, 0.0)
    with pytest.raises(ParameterError):
        band(ikernel, f, 1.0)


# ---------------------------------------------------------- Bernstein


def test_global_bernstein_eigenfield(ikernel, igrid):
    f = eigen_mode(igrid, 4)
    rep = global_bernstein_check(ikernel, f, [2.0 ** m for m in range(1, 8)], 3.0)
    assert rep.max_ratio <= 4.0  # analytic maximum of the band ratio is ~3


def test_global_bernstein_battery(ikernel, ibattery):
    Ns = [2.0 ** m for m in range(1, 8)]
    for name, f in ibattery.items():
        rep = global_bernstein_check(ikernel, f, Ns, 3.0)
        ratios = [max(r.r1, r.r2) for r in rep.rows if not r.skipped]
        assert all(r <= 10.0 for r in ratios), name


def test_global_bernstein_zero_field(ikernel, igrid):
    f = Field.scalar(igrid, np.zeros(igrid.shape))
    rep = global_bernstein_check(ikernel, f, [4.0, 8.0], 3.0)
    assert all(r.skipped for r in rep.rows)


def test_local_bernstein_boundary_bump(ikernel, igrid):
    f = boundary_bump(igrid, 0.05)
    rep = local_bernstein_check(ikernel, f, 0.1, 0, 1, 3.0,
                                [8.0, 16.0, 32.0, 64.0, 128.0])
    assert rep.decay_order >= 6.0


def test_local_bernstein_interior_field(ikernel, igrid):
    f = eigen_mode(igrid, 2)
    rep = local_bernstein_check(ikernel, f, 0.1, 0, 1, 3.0,
                                [8.0, 16.0, 32.0, 64.0, 128.0])
    assert all(c <= 10.0 for c in rep.interior_constants)


def test_local_bernstein_zero_field(ikernel, igrid):
    f = Field.scalar(igrid, np.zeros(igrid.shape))
    rep = local_bernstein_check(ikernel, f, 0.1, 0, 1, 3.0, [8.0, 16.0, 32.0, 64.0, 128.0])
    assert all(v == 0.0 for v in rep.lhs)


def test_local_bernstein_bad_radius(ikernel, igrid):
    f = eigen_mode(igrid, 1)
    with pytest.raises(ParameterError):
        local_bernstein_check(ikernel, f, 0.3, 0, 1, 3.0, [8.0])


# ------------------------------------------------------------- Besov


def test_besov_zero_field(ikernel, igrid):
    f = Field.scalar(igrid, np.zeros(igrid.shape))
    res = besov_heat_norm(ikernel, f, 1.0 / 3.0, 3.0, math.inf)
    assert res.value == 0.0
    assert math.isnan(res.ratio)


def test_besov_forms_agree_within_constant(ikernel, ibattery):
    for name, f in ibattery.items():
        if name == "constant":
            continue
        for q in (1, math.inf):
            res = besov_heat_norm(ikernel, f, 1.0 / 3.0, 3.0, q)
            assert 1.0 / 8.0 <= res.ratio <= 8.0, (name, q)


def test_besov_lacunary_stable_in_depth(ikernel, igrid):
    vals = []
    for J in (5, 7):
        f = lacunary(igrid, 1.0 / 3.0, J, "one", seed=0)
        vals.append(besov_heat_norm(ikernel, f, 1.0 / 3.0, 3.0, math.inf).value)
    assert abs(vals[1] - vals[0]) < 0.25 * vals[0]


def test_besov_eigen_scaling(ikernel, igrid):
    # seminorm of a single mode grows like k^alpha; the k-compensated
    # values should be flat across an eigenmode sweep
    alpha, p = 0.5, 3.0
    lp = eigen_mode(igrid, 1).l_p(p)
    comp = []
    for k in (1, 2, 4, 8):
        res = besov_heat_norm(ikernel, eigen_mode(igrid, k), alpha, p, math.inf)
        comp.append((res.value - lp) / k ** alpha)
    assert max(comp) / min(comp) < 2.0


def test_besov_rejects_bad_q(ikernel, igrid):
    with pytest.raises(ParameterError):
        besov_heat_norm(ikernel, constant(igrid), 0.5, 3.0, 2)


# ---------------------------------------------------------- vanishing


def test_classify_tail_rules():
    assert classify_tail([1, 1, 1, 1, 1, 1]) == "plateau"
    assert classify_tail([1, 0.5, 0.25, 0.1, 0.05, 0.02]) == "vanishing"
    assert classify_tail([0.0] * 6) == "vanishing"
    assert classify_tail([1, 1, 1]) == "inconclusive"


def test_vanishing_smooth(ikernel, igrid):
    rep = vanishing_diagnostic(ikernel, eigen_mode(igrid, 2), 3.0, 0.1)
    assert rep.agree and rep.classification == "vanishing"


def test_vanishing_boundary_bump(ikernel, igrid):
    rep = vanishing_diagnostic(ikernel, boundary_bump(igrid, 0.05), 3.0, 0.1)
    assert rep.agree and rep.classification == "vanishing"


def test_vanishing_three_conditions_agree(ikernel, ibattery):
    # the 1/j-damped tail resolves only on much deeper ladders; it is
    # exercised by the deep-ladder test below
    for name, f in ibattery.items():
        if name == "lacunary_damped":
            continue
        rep = vanishing_diagnostic(ikernel, f, 3.0, 0.1)
        assert rep.agree, (name, rep.classifications)


@pytest.mark.slow
def test_vanishing_deep_ladder_labels():
    # the 1/j-damped ladder needs ~14 octaves before its tail clears the
    # threshold; the critical ladder must stay put at the same depth
    g = Grid(INTERVAL, 131073)
    K = ClosedFormKernel(INTERVAL)
    N_list = [2.0 ** m for m in range(1, 16)]
    crit = lacunary(g, 1.0 / 3.0, 14, "one", seed=0)
    damp = lacunary(g, 1.0 / 3.0, 14, "1/j", seed=0)
    rep_c = vanishing_diagnostic(K, crit, 3.0, 0.1, N_list)
    rep_d = vanishing_diagnostic(K, damp, 3.0, 0.1, N_list)
    assert rep_c.agree and rep_c.classification == "plateau"
    assert rep_d.agree and rep_d.classification == "vanishing"


def test_vanishing_circle_r_independent():
    # no boundary: interior tails coincide with global ones for every r
    dom = Domain.circle(1.0)
    g = Grid(dom, 2048)
    K = ClosedFormKernel(dom)
    x = g.coords[0]
    vals = sum((1.0 / j) * 2.0 ** (-j / 3.0) * np.cos(2 ** j * 2 * math.pi * x)
               for j in range(1, 8))
    f = Field.scalar(g, vals)
    reps = [vanishing_diagnostic(K, f, 3.0, r) for r in (0.05, 0.2)]
    assert reps[0].classifications == reps[1].classifications
    np.testing.assert_allclose(reps[0].tail_highpass, reps[1].tail_highpass, rtol=1e-12)


# ---------------------------------------------------------------- VMO


CHANNEL = Domain.channel(2 * math.pi, 1.0)


@pytest.fixture(scope="module")
def cgrid():
    return Grid(CHANNEL, (64, 1025))


@pytest.fixture(scope="module")
def ckernel():
    return ClosedFormKernel(CHANNEL)


def test_vmo_constant_zero(cgrid):
    f = constant(cgrid)
    _, vals = vmo_modulus(f, 3.0, 0.15, [0.05, 0.02, 0.01])
    assert max(vals) < 1e-13


def test_vmo_lipschitz_decay(cgrid):
    f = lipschitz_kink(cgrid)
    eps = [0.1, 0.05, 0.025, 0.0125]
    _, vals = vmo_modulus(f, 3.0, 0.15, eps)
    # first-order bound: A(eps) <= C eps^{1-1/p}, so halving eps decays by ~0.63
    for a, b in zip(vals, vals[1:]):
        assert b < 0.75 * a
    assert vals[-1] < 0.1


def test_vmo_lacunary_plateau_matches_direct_quadrature(cgrid):
    # oracle: dense polar quadrature of the translation average at 3 eps
    f = lacunary(cgrid, 1.0 / 3.0, 7, "one", seed=3)
    p, r = 3.0, 0.15
    eps_list = [0.04, 0.02, 0.01]
    _, vals = vmo_modulus(f, p, r, eps_list)
    from heatlab.domains import region_mask
    mask = region_mask(cgrid, ("greater", r))
    X, Y = np.meshgrid(*cgrid.coords, indexing="ij")
    pts = np.stack([X[mask], Y[mask]], axis=-1)
    base = f.at(pts)
    wq = cgrid.weights[mask]
    rho = np.linspace(0.025, 0.975, 20)
    phi = np.linspace(0, 2 * math.pi, 40, endpoint=False)
    for eps, fast in zip(eps_list, vals):
        acc = np.zeros(pts.shape[0])
        wtot = 0.0
        for ph in phi:
            for rh in rho:
                h = np.array([math.cos(ph) * rh, math.sin(ph) * rh])
                w = rh  # polar measure
                shifted = f.at(pts - eps * h[None, :])
                acc += w * np.abs(shifted[0] - base[0]) ** p
                wtot += w
        inner = (acc / wtot) ** (1.0 / p)
        oracle = float(np.sum(inner ** p * wq) ** (1.0 / p)) / eps ** (1.0 / p)
        assert abs(oracle - fast) < 0.05 * oracle
    assert min(vals) > 0.5 * max(vals)  # plateau at a positive level


def test_vmo_rejects_wide_translation(cgrid):
    f = constant(cgrid)
    with pytest.raises(ParameterError):
        vmo_modulus(f, 3.0, 0.1, [0.2])


def test_vmo_vs_heat_six_of_six(ckernel, cgrid):
    batt = scalar_battery(cgrid, p=3.0, J=7, seed=3)
    rows = vmo_vs_heat_compare(ckernel, batt, 3.0, 0.15,
                               [8.0, 16.0, 32.0, 64.0, 128.0, 256.0])
    assert all(row.agree for row in rows)
    byname = {row.name: row for row in rows}
    assert byname["constant"].vmo_class == "vanishing"
    assert byname["smooth"].vmo_class == "vanishing"
    assert byname["lacunary_critical"].vmo_class == "plateau"
    assert byname["boundary_bump"].vmo_class == "vanishing"


def test_vmo_compare_empty_battery(ckernel):
    assert vmo_vs_heat_compare(ckernel, {}, 3.0, 0.15) == ()


# ------------------------------------------------- pointwise multiplier


def test_multiplier_identity_cutoff(ikernel, igrid):
    f_one = constant(igrid)
    X = eigen_mode(igrid, 3)
    rep = pointwise_multiplier_check(ikernel, f_one, X, 3.0, 0.1)
    assert max(rep.commutator_w1p) < 1e-10


def test_multiplier_zero_field(ikernel, igrid):
    cf = CutoffFamily.build(igrid, 0.1)
    f_cut = Field.scalar(igrid, cf.chi)
    X = Field.scalar(igrid, np.zeros(igrid.shape))
    rep = pointwise_multiplier_check(ikernel, f_cut, X, 3.0, 0.1)
    assert max(rep.commutator_w1p) == 0.0


def test_multiplier_bound_and_scaling(ikernel, igrid, ibattery):
    cf = CutoffFamily.build(igrid, 0.1)
    f_cut = Field.scalar(igrid, cf.chi)
    s_list = [4.0 ** (-k) for k in range(2, 8)]
    for name in ("lacunary_critical", "lacunary_damped", "smooth", "lipschitz"):
        rep = pointwise_multiplier_check(ikernel, f_cut, ibattery[name], 3.0, 0.1,
                                         s_list)
        assert rep.max_constant <= 20.0, name
        assert rep.scaled_decreasing, (name, rep.scaled)
        assert rep.class_fX == rep.class_X, name
