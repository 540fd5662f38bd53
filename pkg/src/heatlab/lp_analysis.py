"""Heat-flow frequency localization and regularity diagnostics.

The smooth low-pass at frequency N is the heat flow at time 1/N^2; bands
are differences of consecutive low-passes, and the high-pass is the
complement.  On top of these sit the global and localized Bernstein
ratio checks, the heat-space seminorm with its integral and dyadic
forms, the three equivalent vanishing tails, the translation (VMO)
modulus, and the pointwise-multiplier commutator check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domains import Field, Grid, region_mask, sobolev_norm
from .errors import ParameterError
from .kernels import ClosedFormKernel

PLATEAU_FRACTION = 0.2   # last rungs below this fraction of the peak count as vanishing
MIN_RUNGS = 5


def project_leq(kernel: ClosedFormKernel, field: Field, N: float) -> Field:
    """Low-pass at frequency N: the heat flow at time 1/N^2."""
    if not (N > 0):
        raise ParameterError("frequency must be positive")
    return kernel.apply_heat(field, 1.0 / (N * N))


def band(kernel: ClosedFormKernel, field: Field, N: float) -> Field:
    """Dyadic band: low-pass at N minus low-pass at N/2."""
    if not (N > 1):
        raise ParameterError("band frequency must exceed 1")
    hi = project_leq(kernel, field, N)
    lo = project_leq(kernel, field, N / 2.0)
    return hi.copy_with(tuple(a - b for a, b in zip(hi.components, lo.components)))


def project_high(kernel: ClosedFormKernel, field: Field, N: float) -> Field:
    """High-pass complement: field minus its low-pass at N."""
    low = project_leq(kernel, field, N)
    return field.copy_with(tuple(a - b for a, b in zip(field.components, low.components)))


def dyadic_range(grid: Grid, N_min: float = 2.0, nodes_per_width: float = 2.0,
                 axes=None):
    """Dyadic frequencies resolvable on the grid (heat width above ~2h).

    axes restricts the spacing bound to the given axes (e.g. the bounded
    axis when the diagnosed fields vary only across the channel).
    """
    spacings = grid.spacing if axes is None else [grid.spacing[a] for a in axes]
    h = max(spacings)
    N_max = 1.0 / (nodes_per_width * h)
    out = []
    N = N_min
    while N <= N_max:
        out.append(N)
        N *= 2.0
    return out


def _bounded_axes(grid: Grid):
    axes = [a for a, ax in enumerate(grid.domain.axes) if not ax.periodic]
    return axes if axes else None


def _fit_loglog(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of log y against log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    good = y > 0
    if np.count_nonzero(good) < 2:
        return math.nan
    lx, ly = np.log(x[good]), np.log(y[good])
    A = np.stack([np.ones_like(lx), lx], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    return float(coef[1])


# ------------------------------------------------------------------ ladders


@dataclass
class DyadicLadder:
    """Values of a frequency-localized quantity over dyadic rungs."""

    quantity: str
    frequencies: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        f = np.asarray(self.frequencies)
        if np.any(f[1:] <= f[:-1]):
            raise ParameterError("ladder frequencies must increase")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("ladder values must be finite")


@dataclass
class BesovProfile:
    """s -> s^{(1-alpha)/2} ||e^{s Delta} X||_{W^{1,p}} on a log grid."""

    s_grid: tuple[float, ...]    # strictly decreasing in (0, 1]
    values: tuple[float, ...]
    alpha: float
    p: float
    mask_radius: float | None = None

    def __post_init__(self):
        s = np.asarray(self.s_grid)
        if np.any(s[1:] >= s[:-1]):
            raise ParameterError("profile s grid must strictly decrease")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("profile values must be finite")


@dataclass
class BesovNormResult:
    value: float              # integral form (the norm)
    value_dyadic: float
    ratio: float              # integral / dyadic
    profile: BesovProfile
    ladder: DyadicLadder


def besov_heat_norm(kernel: ClosedFormKernel, field: Field, alpha: float,
                    p: float, q, r: float | None = None,
                    points_per_octave: int = 3) -> BesovNormResult:
    """Heat-space norm at smoothness alpha: integral and dyadic forms.

    Integral form: ||X||_p + L^q(ds/s, (0,1]) size of the profile.
    Dyadic form:  ||X||_p + l^q over rungs of N^{alpha-1} ||P_{<=N} X||_{W^{1,p}}.
    q is 1 or inf; the two forms agree within a fixed constant factor.
    """
    if not (0.0 < alpha < 1.0):
        raise ParameterError("alpha must be in (0, 1)")
    if q not in (1, math.inf):
        raise ParameterError("only q = 1 and q = inf are supported")
    grid = field.grid
    mask = region_mask(grid, ("greater", r)) if r is not None else None
    freqs = dyadic_range(grid)
    if not freqs:
        raise ParameterError("grid too coarse for any dyadic rung")
    lp = field.l_p(p, mask)

    s_lo = 1.0 / freqs[-1] ** 2
    n_pts = max(2, int(round(points_per_octave * math.log2(1.0 / s_lo))))
    s_grid = np.geomspace(1.0, s_lo, n_pts)
    prof_vals = []
    for s in s_grid:
        hf = kernel.apply_heat(field, s)
        prof_vals.append(s ** (0.5 * (1.0 - alpha)) * sobolev_norm(hf, 1, p, mask))
    prof_vals = np.array(prof_vals)
    if q == math.inf:
        semi_int = float(np.max(prof_vals))
    else:
        # trapezoid in log s for the ds/s measure
        ls = np.log(s_grid)
        semi_int = float(np.trapezoid(prof_vals[::-1], ls[::-1]))

    rung_vals = []
    for N in freqs:
        hf = project_leq(kernel, field, N)
        rung_vals.append(N ** (alpha - 1.0) * sobolev_norm(hf, 1, p, mask))
    rung_vals = np.array(rung_vals)
    semi_dy = float(np.max(rung_vals)) if q == math.inf else float(np.sum(rung_vals))

    value = lp + semi_int
    value_dy = lp + semi_dy
    ratio = value / value_dy if value_dy > 0 else math.nan
    profile = BesovProfile(tuple(s_grid), tuple(prof_vals), alpha, p, r)
    ladder = DyadicLadder("N^{alpha-1} W^{1,p} low-pass", tuple(freqs), tuple(rung_vals))
    return BesovNormResult(value, value_dy, ratio, profile, ladder)


# ------------------------------------------------------------- Bernstein


@dataclass
class BernsteinRow:
    N: float
    band_lp: float
    low2_w2p: float
    low1_w1p: float
    r1: float      # band * N^2 / W^{2,p} low-pass at sqrt(2) N
    r2: float      # band * N / W^{1,p} low-pass at 2N
    skipped: bool


@dataclass
class GlobalBernsteinReport:
    p: float
    rows: tuple[BernsteinRow, ...]

    @property
    def max_ratio(self) -> float:
        vals = [max(r.r1, r.r2) for r in self.rows if not r.skipped]
        return max(vals) if vals else math.nan


def global_bernstein_check(kernel: ClosedFormKernel, field: Field,
                           N_list, p: float) -> GlobalBernsteinReport:
    """Band-to-low-pass ratio table; bounded ratios are the estimate."""
    rows = []
    for N in N_list:
        bnd = band(kernel, field, N).l_p(p)
        w2 = sobolev_norm(project_leq(kernel, field, math.sqrt(2.0) * N), 2, p)
        w1 = sobolev_norm(project_leq(kernel, field, 2.0 * N), 1, p)
        if w2 < 1e-30 or w1 < 1e-30:
            rows.append(BernsteinRow(N, bnd, w2, w1, math.nan, math.nan, True))
            continue
        rows.append(BernsteinRow(N, bnd, w2, w1,
                                 bnd * N * N / w2, bnd * N / w1, False))
    return GlobalBernsteinReport(p, tuple(rows))


@dataclass
class LocalBernsteinReport:
    r: float
    m1: int
    m2: int
    p: float
    frequencies: tuple[float, ...]
    lhs: tuple[float, ...]            # W^{m1+m2,p} low-pass on the deep interior
    rhs_interior: tuple[float, ...]   # N^{m2} * W^{m1,p} on the wider interior
    rhs_boundary: float               # L^p mass near the wall
    decay_order: float                # fitted -slope of log lhs vs log N
    interior_constants: tuple[float, ...]


def local_bernstein_check(kernel: ClosedFormKernel, field: Field, r: float,
                          m1: int, m2: int, p: float, N_list) -> LocalBernsteinReport:
    """Interior low-pass norms against interior data plus a wall remainder.

    For fields supported near the wall the interior term vanishes and the
    decay order of the left side is the off-diagonal rate on display.
    """
    grid = field.grid
    if m1 + m2 > 2:
        raise ParameterError("total derivative order above 2 is unsupported")
    inr = grid.domain.inradius
    if not (0.0 < 3.0 * r < inr):
        raise ParameterError(f"need 0 < r < inradius/3 = {inr / 3.0}")
    deep = region_mask(grid, ("greater", 2.0 * r))
    wide = region_mask(grid, ("greater", r))
    wall = region_mask(grid, ("less", 3.0 * r))
    if not (np.any(deep) and np.any(wide) and np.any(wall)):
        raise ParameterError("masks are empty at this resolution")
    lhs, rhs_i, consts = [], [], []
    rhs_b = field.l_p(p, wall)
    base = sobolev_norm(field, m1, p, wide)
    for N in N_list:
        low = project_leq(kernel, field, N)
        val = sobolev_norm(low, m1 + m2, p, deep)
        lhs.append(val)
        rhs_i.append(N ** m2 * base)
        consts.append(val / (N ** m2 * base) if base > 1e-30 else math.nan)
    slope = _fit_loglog(np.asarray(N_list), np.asarray(lhs))
    decay_order = -slope if math.isfinite(slope) else math.inf
    return LocalBernsteinReport(r, m1, m2, p, tuple(N_list), tuple(lhs),
                                tuple(rhs_i), rhs_b, decay_order, tuple(consts))


# ------------------------------------------------------------- vanishing


def classify_tail(values, threshold: float = PLATEAU_FRACTION,
                  n_last: int = 3) -> str:
    """Vanishing/plateau call: the last rungs against threshold * peak.

    The aggregate (mean) of the last rungs is compared, which tolerates
    one slow rung inside an otherwise decaying tail at desk windows.
    """
    v = np.asarray(values, dtype=float)
    if len(v) < MIN_RUNGS:
        return "inconclusive"
    peak = float(np.max(v))
    if peak <= 1e-14:
        return "vanishing"
    return "vanishing" if np.mean(v[-n_last:]) < threshold * peak else "plateau"


@dataclass
class VanishingReport:
    """The three equivalent interior tails and their classifications."""

    p: float
    r: float
    frequencies: tuple[float, ...]
    tail_lowpass: tuple[float, ...]    # N^{1/p-1} W^{1,p} low-pass
    tail_band: tuple[float, ...]       # N^{1/p} L^p band
    tail_highpass: tuple[float, ...]   # N^{1/p} L^p high-pass
    classifications: tuple[str, str, str]
    threshold: float = PLATEAU_FRACTION

    @property
    def agree(self) -> bool:
        return len(set(self.classifications)) == 1

    @property
    def classification(self) -> str:
        return self.classifications[0] if self.agree else "mixed"


def vanishing_diagnostic(kernel: ClosedFormKernel, field: Field, p: float,
                         r: float, N_list=None) -> VanishingReport:
    """Compute the three interior tails and classify each one."""
    grid = field.grid
    if N_list is None:
        N_list = dyadic_range(grid, nodes_per_width=1.0)
    N_list = list(N_list)
    mask = region_mask(grid, ("greater", r))
    t1, t2, t3 = [], [], []
    low_cache: dict[float, Field] = {}

    def low(N):
        if N not in low_cache:
            low_cache[N] = project_leq(kernel, field, N)
        return low_cache[N]

    for N in N_list:
        lo = low(N)
        halfway = low(N / 2.0)
        t1.append(N ** (1.0 / p - 1.0) * sobolev_norm(lo, 1, p, mask))
        bandf = lo.copy_with(tuple(a - b for a, b in
                                   zip(lo.components, halfway.components)))
        t2.append(N ** (1.0 / p) * bandf.l_p(p, mask))
        hi = field.copy_with(tuple(a - b for a, b in
                                   zip(field.components, lo.components)))
        t3.append(N ** (1.0 / p) * hi.l_p(p, mask))
    cls = (classify_tail(t1), classify_tail(t2), classify_tail(t3))
    return VanishingReport(p, r, tuple(N_list), tuple(t1), tuple(t2), tuple(t3), cls)


# ------------------------------------------------------------------- VMO


def _ball_quadrature(n_angle: int = 8, n_radial: int = 4):
    """Product rule on the unit disk, normalized to a probability measure."""
    u, wu = np.polynomial.legendre.leggauss(n_radial)
    u = 0.5 * (u + 1.0)          # radius^2 variable on (0, 1)
    wu = 0.5 * wu
    rho = np.sqrt(u)
    phi = 2.0 * math.pi * np.arange(n_angle) / n_angle
    H = np.stack([np.outer(np.cos(phi), rho).ravel(),
                  np.outer(np.sin(phi), rho).ravel()], axis=-1)
    W = np.tile(wu, n_angle) / n_angle
    return H, W


def vmo_modulus(field: Field, p: float, r: float, eps_list,
                n_angle: int = 8, n_radial: int = 4):
    """Normalized translation-difference averages A_r(eps) on the interior.

    A_r(eps) = eps^{-1/p} || || X(x - eps h) - X(x) ||_{L^p, |h|<=1} ||_{L^p(M_{>r})}
    with the unit-ball average taken as a probability measure by a fixed
    32-point product quadrature.
    """
    grid = field.grid
    if grid.dim != 2:
        raise ParameterError("translation modulus needs a 2D domain")
    eps_arr = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    if np.any(eps_arr >= r):
        raise ParameterError("translation lengths must stay below r")
    mask = region_mask(grid, ("greater", r))
    H, W = _ball_quadrature(n_angle, n_radial)
    X, Y = np.meshgrid(*grid.coords, indexing="ij")
    base_pts = np.stack([X[mask], Y[mask]], axis=-1)
    base_vals = np.stack([c[mask] for c in field.components])
    wq = field.grid.weights[mask]
    out = []
    for eps in eps_arr:
        acc = np.zeros(base_pts.shape[0])
        for h, w in zip(H, W):
            shifted = field.at(base_pts - eps * h[None, :])
            diff2 = np.sum((shifted - base_vals) ** 2, axis=0)
            acc += w * diff2 ** (p / 2.0)
        inner = acc ** (1.0 / p)            # L^p_h average per node
        a_eps = float(np.sum(inner ** p * wq) ** (1.0 / p)) / eps ** (1.0 / p)
        out.append(a_eps)
    return tuple(eps_arr), tuple(out)


@dataclass
class VmoCompareRow:
    name: str
    vmo_values: tuple[float, ...]
    heat_values: tuple[float, ...]
    vmo_class: str
    heat_class: str

    @property
    def agree(self) -> bool:
        return self.vmo_class == self.heat_class


def vmo_vs_heat_compare(kernel: ClosedFormKernel, fields: dict[str, Field],
                        p: float, r: float, N_list=None) -> tuple[VmoCompareRow, ...]:
    """Classify each battery field by both routes over matched scale windows.

    The heat route is the high-pass tail N^{1/p} L^p(M_{>r}); the VMO route
    is A_r at translation lengths eps = 1/N.  Both use the same rung
    classifier, so agreement is the equivalence on display.
    """
    rows = []
    if not fields:
        return ()
    grid = next(iter(fields.values())).grid
    if N_list is None:
        # battery fields vary across the channel; key the range to its axis
        N_list = dyadic_range(grid, nodes_per_width=1.0, axes=_bounded_axes(grid))
    N_list = [N for N in N_list if 1.0 / N < r]
    eps_list = [1.0 / N for N in N_list]
    mask = region_mask(grid, ("greater", r))
    for name, f in fields.items():
        heat_vals = []
        for N in N_list:
            hi = project_high(kernel, f, N)
            heat_vals.append(N ** (1.0 / p) * hi.l_p(p, mask))
        _, vmo_vals = vmo_modulus(f, p, r, eps_list)
        # both ladders ordered toward small scale
        vmo_seq = tuple(vmo_vals)
        rows.append(VmoCompareRow(name, vmo_seq, tuple(heat_vals),
                                  classify_tail(vmo_seq), classify_tail(heat_vals)))
    return tuple(rows)


# ------------------------------------------------- pointwise multiplier


@dataclass
class MultiplierReport:
    s_list: tuple[float, ...]
    commutator_w1p: tuple[float, ...]       # ||f^s X^s - (f X)^s||_{W^{1,p}}
    bound_constants: tuple[float, ...]      # against ||X||_{L^p}
    scaled: tuple[float, ...]               # s^{(1-1/p)/2} * commutator norm
    class_X: str
    class_fX: str

    @property
    def max_constant(self) -> float:
        return max(self.bound_constants)

    @property
    def scaled_decreasing(self) -> bool:
        v = np.asarray(self.scaled)
        return bool(v[-1] <= 0.5 * np.max(v) and np.all(np.diff(v[-3:]) <= 1e-12))


def pointwise_multiplier_check(kernel: ClosedFormKernel, cutoff: Field,
                               field: Field, p: float, r: float,
                               s_list=None) -> MultiplierReport:
    """Commutator of multiplication by a smooth interior cutoff with the flow.

    Verifies the multiplier estimate ||f^s X^s - (fX)^s||_{W^{1,p}} <= C ||X||_{L^p}
    along an s sweep, the vanishing of its critical scaling, and that the
    interior tail classification of f X matches that of X.
    """
    grid = field.grid
    if s_list is None:
        s_list = [4.0 ** (-k) for k in range(2, 7)]
    s_arr = sorted((float(s) for s in s_list), reverse=True)
    if kernel.degree == 0:
        scalar_kernel = kernel
    else:
        scalar_kernel = ClosedFormKernel(grid.domain, degree=0,
                                         image_budget=kernel.image_budget)
    x_lp = field.l_p(p)
    fX = field.copy_with(tuple(cutoff.components[0] * c for c in field.components))
    w_norms, consts, scaled = [], [], []
    for s in s_arr:
        fs = scalar_kernel.apply_heat(cutoff, s)
        Xs = kernel.apply_heat(field, s)
        fXs = kernel.apply_heat(fX, s)
        comm = field.copy_with(tuple(fs.components[0] * a - b
                                     for a, b in zip(Xs.components, fXs.components)))
        wn = sobolev_norm(comm, 1, p)
        w_norms.append(wn)
        consts.append(wn / x_lp if x_lp > 1e-30 else 0.0)
        scaled.append(s ** (0.5 * (1.0 - 1.0 / p)) * wn)
    cls_X = vanishing_diagnostic(kernel, field, p, r).classification
    cls_fX = vanishing_diagnostic(kernel, fX, p, r).classification
    return MultiplierReport(tuple(s_arr), tuple(w_norms), tuple(consts),
                            tuple(scaled), cls_X, cls_fX)
