"""Exact heat kernels on flat model domains and their application.

Each axis carries a 1D factor kernel: the free Gaussian, its half-line
Dirichlet/Neumann reflections, interval kernels by repeated reflection,
and the periodic wrap.  Factors tensorize into scalar kernels and into
the componentwise 1-form kernel whose tangential part is Neumann and
normal part Dirichlet.  Two representations are kept per factor: image
sums (fast for small t) and eigen-series (fast for large t), crossing
over at t = L^2/20.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domains import CLOSED, HALF, PERIODIC, Domain, Field, Grid
from .errors import ConfigError, ParameterError, TruncationError

_EXP_CUT = 46.0  # exp(-46) ~ 1e-20, below double tail relevance


def _gauss_derivs(t: float, u: np.ndarray, order: int) -> np.ndarray:
    """order-th derivative of (4 pi t)^{-1/2} exp(-u^2/(4t)) in u."""
    g = math.pow(4.0 * math.pi * t, -0.5) * np.exp(-(u * u) / (4.0 * t))
    if order == 0:
        return g
    a = u / (2.0 * t)
    if order == 1:
        return -a * g
    if order == 2:
        return (a * a - 1.0 / (2.0 * t)) * g
    if order == 3:
        return (-a * a * a + 3.0 * a / (2.0 * t)) * g
    raise ParameterError("kernel derivatives above order 3 are unsupported")


@dataclass(frozen=True)
class Kernel1D:
    """One axis factor of a product heat kernel."""

    length: float
    axis_kind: str       # periodic / closed / half
    bc: str              # free / neumann / dirichlet / periodic
    image_budget: int = 12
    crossover: float | None = None   # images below, eigen-series above

    def __post_init__(self):
        if self.axis_kind == PERIODIC and self.bc != "periodic":
            raise ConfigError("periodic axis requires periodic bc")
        if self.bc == "periodic" and self.axis_kind != PERIODIC:
            raise ConfigError("periodic bc requires a periodic axis")

    def _crossover(self) -> float:
        if self.crossover is not None:
            return self.crossover
        if self.axis_kind == HALF or self.bc == "free":
            return math.inf  # no eigen-series; images always
        return self.length ** 2 / 20.0

    def eval(self, t: float, x, y, dx: int = 0, dy: int = 0,
             rep: str = "auto", budget: int | None = None) -> np.ndarray:
        """Evaluate d_x^dx d_y^dy K(t, x, y) on the outer product of x and y."""
        if not (t > 0):
            raise ParameterError(f"kernel evaluation needs t > 0, got {t}")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if rep == "auto":
            rep = "image" if t <= self._crossover() else "eigen"
        if rep == "image":
            return self._eval_images(t, x, y, dx, dy, budget)
        if rep == "eigen":
            return self._eval_eigen(t, x, y, dx, dy)
        raise ParameterError(f"unknown representation {rep!r}")

    def _images(self, t: float, budget: int):
        """List of (sign, s, shift): kernel = sum sign * G(x - s*y - shift)."""
        L = self.length
        if self.bc == "free":
            return [(1.0, 1.0, 0.0)]
        if self.bc == "periodic":
            return [(1.0, 1.0, m * L) for m in range(-budget, budget + 1)]
        refl = 1.0 if self.bc == "neumann" else -1.0
        if self.axis_kind == HALF:
            # reflections about 0 only; far end is a truncation, not a boundary
            if t > (L / 12.0) ** 2:
                raise TruncationError(
                    f"half-line truncation {L} too short for t={t}")
            return [(1.0, 1.0, 0.0), (refl, -1.0, 0.0)]
        out = []
        for m in range(-budget, budget + 1):
            out.append((1.0, 1.0, 2.0 * m * L))
            out.append((refl, -1.0, 2.0 * m * L))
        return out

    def _eval_images(self, t, x, y, dx, dy, budget=None):
        B = self.image_budget if budget is None else budget
        acc = np.zeros((len(x), len(y)))
        order = dx + dy
        cut = math.sqrt(4.0 * t * (_EXP_CUT + 60.0))
        ranges = {1.0: (float(np.min(x) - np.max(y)), float(np.max(x) - np.min(y))),
                  -1.0: (float(np.min(x) + np.min(y)), float(np.max(x) + np.max(y)))}
        for sign, s, shift in self._images(t, B):
            lo, hi = ranges[s]
            if shift - hi > cut or lo - shift > cut:
                continue  # image tail below double precision everywhere
            u = x[:, None] - s * y[None, :] - shift
            acc += (sign * (-s) ** dy) * _gauss_derivs(t, u, order)
        return acc

    def eval_pairs(self, t: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Kernel values at matched point pairs (x_i, y_i)."""
        if not (t > 0):
            raise ParameterError(f"kernel evaluation needs t > 0, got {t}")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if t <= self._crossover():
            acc = np.zeros_like(x)
            for sign, s, shift in self._images(t, self.image_budget):
                acc += sign * _gauss_derivs(t, x - s * y - shift, 0)
            return acc
        return np.array([self._eval_eigen(t, xi[None], yi[None], 0, 0)[0, 0]
                         for xi, yi in zip(x, y)])

    def _eval_eigen(self, t, x, y, dx, dy):
        L = self.length
        if self.bc == "periodic":
            kmax = self._eigen_kmax(t, 2.0 * math.pi / L)
            k = 2.0 * math.pi * np.arange(1, kmax + 1) / L
            u = x[:, None, None] - y[None, :, None]
            # d^n cos(k u): chain d_x = d_u, d_y = -d_u
            vals = _trig_deriv(k[None, None, :] * u, dx + dy, "cos")
            vals = vals * k[None, None, :] ** (dx + dy) * (-1.0) ** dy
            out = (2.0 / L) * np.sum(np.exp(-t * k * k)[None, None, :] * vals, axis=2)
            if dx + dy == 0:
                out += 1.0 / L
            return out
        kmax = self._eigen_kmax(t, math.pi / L)
        k = math.pi * np.arange(1, kmax + 1) / L
        ek = np.exp(-t * k * k)
        if self.bc == "neumann":
            fx = _trig_deriv(np.outer(x, k), dx, "cos") * k[None, :] ** dx
            fy = _trig_deriv(np.outer(y, k), dy, "cos") * k[None, :] ** dy
            out = (2.0 / L) * (fx * ek[None, :]) @ fy.T
            if dx == 0 and dy == 0:
                out += 1.0 / L
            return out
        if self.bc == "dirichlet":
            fx = _trig_deriv(np.outer(x, k), dx, "sin") * k[None, :] ** dx
            fy = _trig_deriv(np.outer(y, k), dy, "sin") * k[None, :] ** dy
            return (2.0 / L) * (fx * ek[None, :]) @ fy.T
        raise ParameterError(f"no eigen-series for bc {self.bc!r}")

    def _eigen_kmax(self, t: float, k1: float) -> int:
        # include modes until exp(-k^2 t) * k^3 is below double tail
        kmax = math.sqrt((_EXP_CUT + 30.0) / t) / k1
        return max(8, int(math.ceil(kmax)) + 2)

    def tail_ok(self, t: float, tol: float = 1e-14) -> bool:
        """Compare budgets B and 2B at worst-case points."""
        xs = np.linspace(0.0, self.length, 17)
        a = self._eval_images(t, xs, xs, 0, 0, budget=self.image_budget)
        b = self._eval_images(t, xs, xs, 0, 0, budget=2 * self.image_budget)
        scale = np.max(np.abs(b))
        return bool(np.max(np.abs(a - b)) <= tol * max(scale, 1e-300))


def _transform_heat_periodic(values: np.ndarray, t: float, L: float) -> np.ndarray:
    """Fourier-multiplier heat application on a periodic axis (axis 0).

    Identical to the quadrature-weighted periodic eigen-series matrix by
    discrete trigonometric orthogonality; exact spectral truncation keeps
    it valid below the image-matrix aliasing floor t ~ h^2.
    """
    n = values.shape[0]
    k = 2.0 * math.pi * np.fft.rfftfreq(n, d=L / n)
    damp = np.exp(-t * k * k).reshape((len(k),) + (1,) * (values.ndim - 1))
    return np.fft.irfft(np.fft.rfft(values, axis=0) * damp, n=n, axis=0)


def _transform_heat_closed(values: np.ndarray, t: float, bc: str, L: float) -> np.ndarray:
    """Eigen-series heat application on a closed axis via DCT-I / DST-I.

    Identical (to roundoff) to the quadrature-weighted eigen-series matrix,
    because trapezoidal weights realize exactly the type-1 transform pairing.
    Applied along axis 0.
    """
    from scipy.fft import dct, dst, idct, idst

    n = values.shape[0]
    k = np.arange(n) * math.pi / L
    damp = np.exp(-t * k * k).reshape((n,) + (1,) * (values.ndim - 1))
    if bc == "neumann":
        spec = dct(values, type=1, axis=0)
        return idct(spec * damp, type=1, axis=0)
    interior = values[1:-1]
    kd = (np.arange(1, n - 1) * math.pi / L).reshape((n - 2,) + (1,) * (values.ndim - 1))
    spec = dst(interior, type=1, axis=0)
    out = np.zeros_like(values)
    out[1:-1] = idst(spec * np.exp(-t * kd * kd), type=1, axis=0)
    return out


def _trig_deriv(theta: np.ndarray, order: int, kind: str) -> np.ndarray:
    """d^order/d theta^order of cos(theta) or sin(theta), exact at zeros."""
    cycle = order % 4
    if kind == "sin":
        cycle = (cycle + 3) % 4  # sin = cos shifted by one derivative step back
    return (np.cos(theta), -np.sin(theta), -np.cos(theta), np.sin(theta))[cycle]


def _axis_kernel(ax, bc: str, image_budget: int) -> Kernel1D:
    return Kernel1D(ax.length, ax.kind, bc, image_budget)


class ClosedFormKernel:
    """Evaluable Hodge-Neumann heat kernel with a declared truncation budget.

    degree 0: one scalar kernel, product of per-axis factors.
    degree 1 (channel / rectangle): componentwise diagonal kernel whose
    component i is Dirichlet along its own bounded axis and Neumann along
    the others (absolute boundary condition).
    """

    def __init__(self, domain: Domain, degree: int = 0,
                 bc: tuple[str, ...] | str | None = None, image_budget: int = 12):
        self.domain = domain
        self.degree = degree
        self.image_budget = image_budget
        if degree not in (0, 1):
            raise ParameterError("degree must be 0 or 1")
        if degree == 1 and domain.kind not in ("channel", "rectangle"):
            raise ParameterError("degree-1 kernels live on channel or rectangle")
        if degree == 0:
            if bc is None:
                bc = tuple("periodic" if ax.periodic else "neumann" for ax in domain.axes)
            elif isinstance(bc, str):
                bc = tuple("periodic" if ax.periodic else bc for ax in domain.axes)
            self.bc = tuple(bc)
            self._factors = {(): tuple(_axis_kernel(ax, b, image_budget)
                                       for ax, b in zip(domain.axes, self.bc))}
        else:
            self.bc = ("neumann-tangential", "dirichlet-normal")
            self._factors = {}
            for comp in range(domain.dim):
                facs = []
                for a, ax in enumerate(domain.axes):
                    if ax.periodic:
                        facs.append(_axis_kernel(ax, "periodic", image_budget))
                    elif a == comp:
                        facs.append(_axis_kernel(ax, "dirichlet", image_budget))
                    else:
                        facs.append(_axis_kernel(ax, "neumann", image_budget))
                self._factors[comp] = tuple(facs)
        self._matrix_cache: dict = {}
        self._cache_bytes = 0

    # -- factor access ---------------------------------------------------

    def factors(self, comp: int | None = None) -> tuple[Kernel1D, ...]:
        if self.degree == 0:
            return self._factors[()]
        if comp is None:
            raise ParameterError("degree-1 kernel needs a component index")
        return self._factors[comp]

    def component_tags(self) -> tuple[str, ...]:
        if self.degree == 0:
            return (self.bc[-1] if self.domain.has_boundary else "periodic",)
        tags = ["neumann"] * self.domain.dim
        for comp in range(self.domain.dim):
            if not self.domain.axes[comp].periodic:
                tags[comp] = "dirichlet"
        if self.domain.kind == "channel":
            tags = ["neumann", "dirichlet"]
        return tuple(tags)

    # -- pointwise evaluation ---------------------------------------------

    def eval_scalar(self, t: float, x, y) -> float | np.ndarray:
        """Scalar kernel value K(t, x, y); symmetric, positive off Dirichlet walls."""
        if self.degree != 0:
            raise ParameterError("eval_scalar needs a degree-0 kernel")
        return self._eval_product(self._factors[()], t, x, y)

    def eval_form(self, t: float, x, y) -> np.ndarray:
        """Diagonal component values of the 1-form kernel at (t, x, y)."""
        if self.degree != 1:
            raise ParameterError("eval_form needs a degree-1 kernel")
        return np.array([self._eval_product(self._factors[c], t, x, y)
                         for c in range(self.domain.dim)])

    def _eval_product(self, facs, t, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        # rows of x and y are points; returns (len(x),) for matched lengths
        if x.shape[-1] != self.domain.dim or y.shape[-1] != self.domain.dim:
            raise ParameterError(f"points must have dim {self.domain.dim}")
        if x.shape[0] == 1 and y.shape[0] > 1:
            x = np.broadcast_to(x, y.shape)
        if y.shape[0] == 1 and x.shape[0] > 1:
            y = np.broadcast_to(y, x.shape)
        val = np.ones(x.shape[0])
        for a, fac in enumerate(facs):
            val = val * fac.eval_pairs(t, x[:, a], y[:, a])
        return val if val.size > 1 else float(val[0])

    # -- heat application --------------------------------------------------

    def axis_matrix(self, grid: Grid, axis: int, t: float, comp: int | None = None,
                    dx: int = 0, dy: int = 0) -> np.ndarray:
        """Quadrature-weighted axis operator  A[i,j] = d^dx_x d^dy_y K(t,xi,yj) w_j."""
        comp_key = () if self.degree == 0 else comp
        key = (grid.shape[axis], grid.spacing[axis], axis, comp_key,
               round(math.log(t), 12), dx, dy)
        hit = self._matrix_cache.get(key)
        if hit is not None:
            return hit
        fac = self._factors[comp_key][axis]
        xs = grid.coords[axis]
        A = fac.eval(t, xs, xs, dx=dx, dy=dy) * grid.axis_weights[axis][None, :]
        # bound the cache by total bytes, evicting oldest entries
        self._cache_bytes = getattr(self, "_cache_bytes", 0) + A.nbytes
        self._matrix_cache[key] = A
        while self._cache_bytes > 600e6 and len(self._matrix_cache) > 1:
            k0 = next(iter(self._matrix_cache))
            self._cache_bytes -= self._matrix_cache.pop(k0).nbytes
        return A

    def _check_field(self, field: Field):
        if field.grid.domain is not self.domain and field.grid.domain != self.domain:
            raise ConfigError("field lives on a different domain")
        if field.degree != self.degree:
            raise ConfigError(
                f"kernel degree {self.degree} cannot heat a degree-{field.degree} field")
        if field.bc_tags != tuple(self.component_tags()):
            raise ConfigError(
                f"bc tags {field.bc_tags} do not match kernel {self.component_tags()}")

    def apply_component(self, grid: Grid, values: np.ndarray, t: float,
                        comp: int | None = None,
                        dx: tuple[int, ...] | None = None,
                        dy: tuple[int, ...] | None = None) -> np.ndarray:
        """Heat one component: out(x) = int d^dx d^dy K(t,x,y) v(y) dy."""
        dxs = dx or (0,) * grid.dim
        dys = dy or (0,) * grid.dim
        out = np.asarray(values, dtype=float)
        comp_key = () if self.degree == 0 else comp
        for axis in range(grid.dim):
            fac = self._factors[comp_key][axis]
            h = grid.spacing[axis]
            # below the quadrature aliasing floor (or on very large axes) the
            # same operator is evaluated by its orthogonal-transform form
            want_transform = dxs[axis] == 0 and dys[axis] == 0 and \
                (t < 2.5 * h * h or grid.shape[axis] > 1024)
            if want_transform and fac.axis_kind == CLOSED \
                    and fac.bc in ("neumann", "dirichlet"):
                moved = np.moveaxis(out, axis, 0)
                out = np.moveaxis(_transform_heat_closed(
                    moved, t, fac.bc, fac.length), 0, axis)
                continue
            if want_transform and fac.axis_kind == PERIODIC:
                moved = np.moveaxis(out, axis, 0)
                out = np.moveaxis(_transform_heat_periodic(
                    moved, t, fac.length), 0, axis)
                continue
            A = self.axis_matrix(grid, axis, t, comp, dxs[axis], dys[axis])
            moved = np.moveaxis(out, axis, 0)
            out = np.moveaxis(np.tensordot(A, moved, axes=(1, 0)), 0, axis)
        return out

    def apply_heat(self, field: Field, t: float) -> Field:
        """e^{t Delta} applied by kernel quadrature; t = 0 is the identity."""
        if t < 0:
            raise ParameterError("time must be nonnegative")
        self._check_field(field)
        if t == 0:
            return field.copy_with(tuple(c.copy() for c in field.components))
        comps = []
        for ci, c in enumerate(field.components):
            comp = None if self.degree == 0 else ci
            comps.append(self.apply_component(field.grid, c, t, comp))
        return field.copy_with(tuple(comps))


def semigroup_check(kernel: ClosedFormKernel, field: Field, t1: float, t2: float) -> float:
    """Max-norm deviation of S(t1) S(t2) f from S(t1 + t2) f."""
    if not (t1 > 0 and t2 > 0):
        raise ParameterError("semigroup check needs positive times")
    two_step = kernel.apply_heat(kernel.apply_heat(field, t2), t1)
    one_step = kernel.apply_heat(field, t1 + t2)
    dev = 0.0
    for a, b in zip(two_step.components, one_step.components):
        dev = max(dev, float(np.max(np.abs(a - b))))
    return dev


@dataclass
class KernelProbeReport:
    """Short-time decay fit of -t log K at fixed separation."""

    separation: float
    t_samples: tuple[float, ...]
    fitted: float
    target: float
    rel_gap: float
    underflowed: bool
    n_used: int


def _geodesic_separation(domain: Domain, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    d2 = 0.0
    for a, ax in enumerate(domain.axes):
        da = abs(x[a] - y[a])
        if ax.periodic:
            da = min(da, ax.length - da)
        d2 += da * da
    return math.sqrt(d2)


def offdiag_decay_probe(kernel: ClosedFormKernel, x, y, t_list,
                        comp: int | None = None) -> KernelProbeReport:
    """Fit the Gaussian off-diagonal rate of K(t, x, y) for x != y.

    Fits -t log K = c + a t + b t log t over the sample times; c estimates
    d^2/4.  Underflowed samples are dropped and flagged.
    """
    t_arr = np.array(sorted((float(t) for t in t_list), reverse=True))
    if len(t_arr) < 8:
        raise ParameterError("at least 8 decreasing time samples required")
    d = _geodesic_separation(kernel.domain, x, y)
    if d <= 0:
        raise ParameterError("probe points must be distinct")
    if kernel.degree == 0:
        vals = np.array([kernel.eval_scalar(t, x, y) for t in t_arr])
    else:
        vals = np.array([kernel.eval_form(t, x, y)[comp if comp is not None else 0]
                         for t in t_arr])
    good = vals > 0
    underflow = not bool(np.all(good))
    t_good, v_good = t_arr[good], vals[good]
    target = d * d / 4.0
    if len(t_good) < 3:
        return KernelProbeReport(d, tuple(t_arr), math.nan, target, math.nan,
                                 True, int(len(t_good)))
    q = -t_good * np.log(v_good)
    design = np.stack([np.ones_like(t_good), t_good, t_good * np.log(t_good)], axis=1)
    coef, *_ = np.linalg.lstsq(design, q, rcond=None)
    fitted = float(coef[0])
    rel_gap = abs(fitted - target) / target
    return KernelProbeReport(d, tuple(t_arr), fitted, target, rel_gap,
                             underflow, int(len(t_good)))
