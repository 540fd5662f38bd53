"""Flat model domains, tensor grids, region masks and discrete norms.

Domains are one- or two-dimensional flat models: circle, interval,
truncated half-line, periodic channel, rectangle.  Grids are uniform
tensor grids with trapezoidal quadrature (exact volume, spectrally
accurate for fields compatible with the boundary reflections).
Differentiation is trigonometric in periodic directions and 4th-order
centered finite differences with one-sided closures at boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np

from .errors import ParameterError

PERIODIC = "periodic"
CLOSED = "closed"  # interval-type axis, boundary at both ends
HALF = "half"      # truncated half-line, true boundary at 0 only


@dataclass(frozen=True)
class Axis:
    """One direction of a tensor domain."""

    length: float
    kind: str  # PERIODIC, CLOSED or HALF

    @property
    def periodic(self) -> bool:
        return self.kind == PERIODIC


@dataclass(frozen=True)
class Domain:
    """A flat model domain given by its per-axis structure."""

    kind: str
    axes: tuple[Axis, ...]

    @staticmethod
    def circle(L: float) -> "Domain":
        _check_length(L)
        return Domain("circle", (Axis(L, PERIODIC),))

    @staticmethod
    def interval(L: float) -> "Domain":
        _check_length(L)
        return Domain("interval", (Axis(L, CLOSED),))

    @staticmethod
    def half_line(L: float) -> "Domain":
        """Half-line truncated at L; the far end is not a boundary."""
        _check_length(L)
        return Domain("half_line", (Axis(L, HALF),))

    @staticmethod
    def channel(Lx: float, Ly: float) -> "Domain":
        _check_length(Lx)
        _check_length(Ly)
        return Domain("channel", (Axis(Lx, PERIODIC), Axis(Ly, CLOSED)))

    @staticmethod
    def rectangle(Lx: float, Ly: float) -> "Domain":
        _check_length(Lx)
        _check_length(Ly)
        return Domain("rectangle", (Axis(Lx, CLOSED), Axis(Ly, CLOSED)))

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def volume(self) -> float:
        v = 1.0
        for ax in self.axes:
            v *= ax.length
        return v

    @property
    def has_boundary(self) -> bool:
        return any(not ax.periodic for ax in self.axes)

    @property
    def inradius(self) -> float:
        """Largest r with M_{>r} nonempty; inf for boundaryless domains."""
        rs = []
        for ax in self.axes:
            if ax.kind == CLOSED:
                rs.append(ax.length / 2.0)
            elif ax.kind == HALF:
                rs.append(ax.length)
        return min(rs) if rs else math.inf


def _check_length(L: float) -> None:
    if not (L > 0):
        raise ParameterError(f"domain length must be positive, got {L}")


def fd_weights(offsets: np.ndarray, order: int) -> np.ndarray:
    """Finite-difference weights on integer offsets for the given derivative.

    Returns w with sum_i w_i f(x + o_i h) = h^order f^(order)(x) + O(h^{len-order}).
    """
    offsets = np.asarray(offsets, dtype=float)
    n = len(offsets)
    A = np.vander(offsets, n, increasing=True).T  # A[k, i] = o_i^k
    b = np.zeros(n)
    b[order] = math.factorial(order)
    return np.linalg.solve(A, b)


@lru_cache(maxsize=64)
def _closed_stencils(order: int):
    """Interior and one-sided boundary stencils, 4th-order accurate."""
    width = order + 4
    center = fd_weights(np.arange(-2, 3), order)
    top = [fd_weights(np.arange(width) - i, order) for i in range(2)]
    bottom = [fd_weights(np.arange(-width + 1, 1) + i, order) for i in (1, 0)]
    return center, top, bottom, width


def _closed_differentiate(values: np.ndarray, order: int, h: float) -> np.ndarray:
    """4th-order differences with one-sided closures, applied along axis 0."""
    center, top, bottom, width = _closed_stencils(order)
    n = values.shape[0]
    if n < width:
        raise ParameterError(f"axis needs at least {width} nodes for order-{order} derivatives")
    out = np.zeros_like(values)
    for k, w in enumerate(center):
        out[2:n - 2] += w * values[k:n - 4 + k]
    for i, row in enumerate(top):
        out[i] = np.tensordot(row, values[:width], axes=(0, 0))
    for i, row in enumerate(bottom):
        out[n - 2 + i] = np.tensordot(row, values[n - width:], axes=(0, 0))
    return out / h ** order


class Grid:
    """Uniform tensor grid over a Domain with quadrature weights.

    Closed axes carry their endpoints (boundary nodes are grid nodes);
    periodic axes omit the right endpoint.  Trapezoidal weights sum to
    the exact axis length.
    """

    def __init__(self, domain: Domain, shape: int | tuple[int, ...]):
        if isinstance(shape, int):
            shape = (shape,) * domain.dim
        if len(shape) != domain.dim:
            raise ParameterError("one node count per axis required")
        self.domain = domain
        self.shape = tuple(int(n) for n in shape)
        self.coords: tuple[np.ndarray, ...] = ()
        self.axis_weights: tuple[np.ndarray, ...] = ()
        self.spacing: tuple[float, ...] = ()
        coords, weights, spacing = [], [], []
        for ax, n in zip(domain.axes, self.shape):
            if n < 8:
                raise ParameterError("at least 8 nodes per axis")
            if ax.periodic:
                h = ax.length / n
                x = np.arange(n) * h
                w = np.full(n, h)
            else:
                h = ax.length / (n - 1)
                x = np.arange(n) * h
                w = np.full(n, h)
                w[0] = w[-1] = h / 2.0
            x.flags.writeable = False
            w.flags.writeable = False
            coords.append(x)
            weights.append(w)
            spacing.append(h)
        self.coords = tuple(coords)
        self.axis_weights = tuple(weights)
        self.spacing = tuple(spacing)
        self._weights_nd = None
        self._dist = None

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def weights(self) -> np.ndarray:
        """Tensor quadrature weights with the grid's shape."""
        if self._weights_nd is None:
            w = self.axis_weights[0]
            for aw in self.axis_weights[1:]:
                w = np.multiply.outer(w, aw)
            w.flags.writeable = False
            self._weights_nd = w
        return self._weights_nd

    def integrate(self, values: np.ndarray, mask: np.ndarray | None = None) -> float:
        v = np.asarray(values)
        w = self.weights
        if mask is not None:
            return float(np.sum(v * w, where=mask))
        return float(np.sum(v * w))

    def boundary_distance(self) -> np.ndarray:
        """Distance to the boundary at every node (inf when boundaryless)."""
        if self._dist is None:
            d = np.full(self.shape, np.inf)
            for axis, ax in enumerate(self.domain.axes):
                x = self.coords[axis]
                if ax.kind == CLOSED:
                    da = np.minimum(x, ax.length - x)
                elif ax.kind == HALF:
                    da = x.copy()
                else:
                    continue
                shape = [1] * self.dim
                shape[axis] = len(x)
                d = np.minimum(d, da.reshape(shape))
            d.flags.writeable = False
            self._dist = d
        return self._dist

    def boundary_mask(self) -> np.ndarray:
        dist = self.boundary_distance()
        return dist == 0.0

    def differentiate(self, values: np.ndarray, axis: int, order: int) -> np.ndarray:
        """Apply the axis differentiation scheme along one axis."""
        if order == 0:
            return np.asarray(values, dtype=float)
        ax = self.domain.axes[axis]
        v = np.asarray(values, dtype=float)
        if ax.periodic:
            n = self.shape[axis]
            k = 2.0 * np.pi * np.fft.rfftfreq(n, d=self.spacing[axis])
            spec = np.fft.rfft(v, axis=axis)
            shape = [1] * v.ndim
            shape[axis] = len(k)
            spec = spec * (1j * k.reshape(shape)) ** order
            return np.fft.irfft(spec, n=n, axis=axis)
        moved = np.moveaxis(v, axis, 0)
        out = _closed_differentiate(moved, order, self.spacing[axis])
        return np.moveaxis(out, 0, axis)

    def node_index(self, point) -> tuple[int, ...]:
        """Index of the grid node at the given coordinates (must be a node)."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if point.shape != (self.dim,):
            raise ParameterError(f"point must have {self.dim} coordinates")
        idx = []
        for axis in range(self.dim):
            j = int(round(point[axis] / self.spacing[axis]))
            if j < 0 or j >= self.shape[axis] or \
                    abs(self.coords[axis][j] - point[axis]) > 1e-9 * max(1.0, abs(point[axis])):
                raise ParameterError(f"point {point} is not a grid node")
            idx.append(j)
        return tuple(idx)


def absolute_bc_tags(domain: Domain, degree: int) -> tuple[str, ...]:
    """Canonical boundary-condition tags for a field of the given degree.

    Degree 0 fields are Neumann; for degree 1 the tangential component is
    Neumann and the normal component Dirichlet (absolute condition).
    Boundaryless domains are periodic.
    """
    if degree == 0:
        return ("periodic",) if not domain.has_boundary else ("neumann",)
    tags = []
    for ax in domain.axes:
        tags.append("neumann" if ax.periodic else "dirichlet")
    if domain.kind == "channel":
        # only the y-ends are boundary: x-component is purely tangential
        tags = ["neumann", "dirichlet"]
    return tuple(tags)


@dataclass
class Field:
    """A sampled scalar (degree 0) or vector/1-form (degree 1) field.

    components holds one array of the grid's shape per component; bc_tags
    carries the absolute boundary condition per component.  An optional
    analytic evaluator enables off-grid evaluation (used by the VMO
    translation modulus); otherwise splines are fitted on demand.
    """

    grid: Grid
    degree: int
    components: tuple[np.ndarray, ...]
    bc_tags: tuple[str, ...]
    evaluator: object | None = None
    _splines: list | None = dc_field(default=None, repr=False)

    def __post_init__(self):
        expected = 1 if self.degree == 0 else self.grid.dim
        if len(self.components) != expected:
            raise ParameterError(
                f"degree-{self.degree} field needs {expected} components, got {len(self.components)}")
        if len(self.bc_tags) != expected:
            raise ParameterError("one bc tag per component required")
        comps = []
        for c in self.components:
            a = np.asarray(c, dtype=float)
            if a.shape != self.grid.shape:
                raise ParameterError(f"component shape {a.shape} != grid shape {self.grid.shape}")
            comps.append(a)
        self.components = tuple(comps)

    @staticmethod
    def scalar(grid: Grid, values: np.ndarray, bc: str = "neumann",
               evaluator=None) -> "Field":
        if not grid.domain.has_boundary:
            bc = "periodic"
        return Field(grid, 0, (values,), (bc,), evaluator=evaluator)

    @staticmethod
    def vector(grid: Grid, components, bc_tags=None, evaluator=None) -> "Field":
        if bc_tags is None:
            bc_tags = absolute_bc_tags(grid.domain, 1)
        return Field(grid, 1, tuple(components), tuple(bc_tags), evaluator=evaluator)

    def copy_with(self, components) -> "Field":
        return Field(self.grid, self.degree, tuple(components), self.bc_tags,
                     evaluator=None)

    def zeros_like(self) -> "Field":
        return self.copy_with(tuple(np.zeros(self.grid.shape) for _ in self.components))

    def at(self, points: np.ndarray) -> np.ndarray:
        """Evaluate off-grid: analytic when available, cubic spline otherwise.

        points has shape (..., dim); returns (n_components, ...).
        """
        pts = np.asarray(points, dtype=float)
        if self.evaluator is not None:
            return np.asarray(self.evaluator(pts))
        if self._splines is None:
            self._splines = [_build_spline(self.grid, c) for c in self.components]
        flat = pts.reshape(-1, self.grid.dim)
        out = np.stack([s(flat) for s in self._splines])
        return out.reshape((len(self.components),) + pts.shape[:-1])

    def l_p(self, p: float, mask: np.ndarray | None = None) -> float:
        mag = np.sqrt(sum(c ** 2 for c in self.components))
        return self.grid.integrate(mag ** p, mask) ** (1.0 / p)


def _build_spline(grid: Grid, values: np.ndarray):
    from scipy.interpolate import CubicSpline, RectBivariateSpline

    if grid.dim == 1:
        ax = grid.domain.axes[0]
        if ax.periodic:
            x = np.append(grid.coords[0], ax.length)
            v = np.append(values, values[:1])
            cs = CubicSpline(x, v, bc_type="periodic")
            return lambda pts, cs=cs, L=ax.length: cs(np.mod(pts[:, 0], L))
        cs = CubicSpline(grid.coords[0], values)
        return lambda pts, cs=cs: cs(pts[:, 0])
    axx, axy = grid.domain.axes
    x, y = grid.coords
    v = values
    if axx.periodic:
        # wrap three extra columns each side for smooth periodic interpolation
        pad = 3
        x = np.concatenate([x[-pad:] - axx.length, x, x[:pad] + axx.length])
        v = np.concatenate([v[-pad:], v, v[:pad]], axis=0)
    sp = RectBivariateSpline(x, y, v, kx=3, ky=3)

    def ev(pts, sp=sp, Lx=axx.length, periodic=axx.periodic):
        px = np.mod(pts[:, 0], Lx) if periodic else pts[:, 0]
        return sp.ev(px, pts[:, 1])

    return ev


def region_mask(grid: Grid, spec) -> np.ndarray:
    """Node mask for an interior region / boundary strip.

    spec is ("greater", r), ("less", r) or ("band", lo, hi), selecting the
    nodes whose boundary distance is > r, < r, or in [lo, hi].  On a
    boundaryless domain the distance is infinite, so greater(r) is all
    nodes and less(r) none.
    """
    dist = grid.boundary_distance()
    kind = spec[0]
    inr = grid.domain.inradius
    tol = 1e-12 * max(1.0, *(ax.length for ax in grid.domain.axes))
    if kind in ("greater", "less"):
        r = float(spec[1])
        if not (0.0 < r) or (math.isfinite(inr) and r >= inr):
            raise ParameterError(f"radius {r} outside (0, inradius={inr})")
        at_r = np.abs(dist - r) <= tol
        return (dist > r) & ~at_r if kind == "greater" else (dist < r) & ~at_r
    if kind == "band":
        lo, hi = float(spec[1]), float(spec[2])
        if not (0.0 < lo <= hi) or (math.isfinite(inr) and hi >= inr):
            raise ParameterError(f"band [{lo}, {hi}] outside (0, inradius={inr})")
        return (dist >= lo - tol) & (dist <= hi + tol)
    raise ParameterError(f"unknown region spec {spec!r}")


def _multi_indices(dim: int, order: int):
    """All derivative multi-indices of exactly the given total order."""
    return list(combinations_with_replacement(range(dim), order))


def _apply_multi(grid: Grid, values: np.ndarray, idx: tuple[int, ...]) -> np.ndarray:
    out = values
    for axis in range(grid.dim):
        order = idx.count(axis)
        if order:
            out = grid.differentiate(out, axis, order)
    return out


def sobolev_norm(field: Field, m: int, p: float, mask: np.ndarray | None = None) -> float:
    """Discrete W^{m,p} norm over the masked region.

    (sum_{|gamma| <= m} ||D^gamma u||_{L^p(mask)}^p)^{1/p}; derivatives use
    the grid scheme.  An empty mask gives 0.
    """
    if m > 2:
        raise ParameterError("derivative order above 2 is unsupported")
    if not (1.0 < p < math.inf):
        raise ParameterError("p must be in (1, inf)")
    if mask is not None and not np.any(mask):
        return 0.0
    grid = field.grid
    total = 0.0
    for order in range(m + 1):
        for idx in _multi_indices(grid.dim, order):
            mag2 = sum(_apply_multi(grid, c, idx) ** 2 for c in field.components)
            total += grid.integrate(mag2 ** (p / 2.0), mask)
    return total ** (1.0 / p)


def jet_norm(field: Field, k: int, point) -> float:
    """Pointwise jet magnitude (sum_{j<=k} |grad^j u|^2)^{1/2} at a node."""
    if k > 2:
        raise ParameterError("jet order above 2 is unsupported")
    grid = field.grid
    idx = grid.node_index(point)
    total = 0.0
    for order in range(k + 1):
        for midx in _multi_indices(grid.dim, order):
            mult = _tuple_multiplicity(midx, grid.dim, order)
            for c in field.components:
                total += mult * _apply_multi(grid, c, midx)[idx] ** 2
    return math.sqrt(total)


def _tuple_multiplicity(midx: tuple[int, ...], dim: int, order: int) -> int:
    # |grad^j u|^2 sums over ordered index tuples; combinations carry multiplicity
    counts = [midx.count(a) for a in range(dim)]
    mult = math.factorial(order)
    for c in counts:
        mult //= math.factorial(c)
    return mult
