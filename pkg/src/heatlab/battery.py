"""Named test-field constructions with analytic off-grid evaluators.

The scalar battery drives the regularity diagnostics: smooth
eigenfunctions, lacunary trigonometric sums at prescribed dyadic decay,
their damped counterparts, Lipschitz kinks and boundary bumps.  Lacunary
modes on bounded axes stay in the Neumann cosine class so that per-rung
eigenvalue arithmetic is an exact oracle.
"""

from __future__ import annotations

import math

import numpy as np

from .domains import CLOSED, Domain, Field, Grid
from .errors import ParameterError


def _bounded_axis(domain: Domain) -> int:
    for a, ax in enumerate(domain.axes):
        if ax.kind == CLOSED:
            return a
    raise ParameterError("construction needs a bounded axis")


def _profile_field(grid: Grid, profile, bc: str = "neumann") -> Field:
    """Scalar field from a 1D profile along the bounded axis."""
    axis = _bounded_axis(grid.domain)
    vals = profile(grid.coords[axis])
    shape = [1] * grid.dim
    shape[axis] = len(vals)
    full = np.broadcast_to(vals.reshape(shape), grid.shape).copy()

    def evaluator(pts, profile=profile, axis=axis):
        p = np.asarray(pts, dtype=float)
        return profile(p[..., axis])[None]

    return Field.scalar(grid, full, bc=bc, evaluator=evaluator)


def constant(grid: Grid, value: float = 1.0) -> Field:
    def profile(y, value=value):
        return np.full_like(np.asarray(y, dtype=float), value)
    if grid.domain.has_boundary:
        return _profile_field(grid, profile)
    return Field.scalar(grid, np.full(grid.shape, value),
                        evaluator=lambda pts: profile(pts[..., 0])[None])


def eigen_mode(grid: Grid, k: int = 1, amplitude: float = 1.0) -> Field:
    """cos(k pi y / L) along the bounded axis (Neumann eigenfunction)."""
    axis = _bounded_axis(grid.domain)
    L = grid.domain.axes[axis].length
    freq = k * math.pi / L

    def profile(y, a=amplitude, w=freq):
        return a * np.cos(w * np.asarray(y, dtype=float))

    return _profile_field(grid, profile)


def lipschitz_kink(grid: Grid, center: float | None = None) -> Field:
    """|y - c|: Lipschitz but not C^1, hence W^{1,p} with bounded norm."""
    axis = _bounded_axis(grid.domain)
    L = grid.domain.axes[axis].length
    c = L / 2.0 if center is None else center

    def profile(y, c=c):
        return np.abs(np.asarray(y, dtype=float) - c)

    return _profile_field(grid, profile)


def boundary_bump(grid: Grid, width: float) -> Field:
    """Smooth bump supported in the strip of the given width at the wall."""
    axis = _bounded_axis(grid.domain)
    L = grid.domain.axes[axis].length

    def profile(y, w=width, L=L):
        y = np.asarray(y, dtype=float)
        d = np.minimum(y, L - y)
        u = d / w
        out = np.zeros_like(y)
        inside = u < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
        return out

    return _profile_field(grid, profile)


def lacunary(grid: Grid, alpha: float, J: int, weights: str = "one",
             seed: int = 0) -> Field:
    """sum_j w_j 2^{-j alpha} cos(2^j pi y / L + phase_j) on the bounded axis.

    weights "one" gives the critical ladder with constant rungs at
    regularity alpha; "1/j" damps the rungs to a vanishing ladder.
    Phases on a bounded axis are sign flips so each term stays a Neumann
    eigenfunction (the per-rung oracle stays exact).
    """
    if not (0.0 < alpha < 1.0):
        raise ParameterError("regularity exponent must be in (0, 1)")
    axis = _bounded_axis(grid.domain)
    L = grid.domain.axes[axis].length
    n_axis = grid.shape[axis]
    if 2 ** J > (n_axis - 1) / 8:
        raise ParameterError(
            f"lacunary depth J={J} exceeds the grid's usable bandwidth")
    rng = np.random.default_rng(seed)
    signs = rng.choice([-1.0, 1.0], size=J)
    js = np.arange(1, J + 1)
    amps = signs * 2.0 ** (-js * alpha)
    if weights == "1/j":
        amps = amps / js
    elif weights != "one":
        raise ParameterError("weights must be 'one' or '1/j'")
    freqs = 2.0 ** js * math.pi / L

    def profile(y, amps=amps, freqs=freqs):
        y = np.asarray(y, dtype=float)
        return sum(a * np.cos(w * y) for a, w in zip(amps, freqs))

    return _profile_field(grid, profile)


def random_trig(grid: Grid, modes: int = 9, seed: int = 0) -> Field:
    """Random smooth cosine sum on the bounded axis."""
    axis = _bounded_axis(grid.domain)
    L = grid.domain.axes[axis].length
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal(modes)

    def profile(y, coef=coef, L=L):
        y = np.asarray(y, dtype=float)
        return sum(c * np.cos(k * math.pi * y / L) for k, c in enumerate(coef))

    return _profile_field(grid, profile)


def scalar_battery(grid: Grid, p: float = 3.0, J: int | None = None,
                   bump_width: float | None = None, seed: int = 0) -> dict[str, Field]:
    """The standard six-field diagnostic battery on a bounded domain."""
    axis = _bounded_axis(grid.domain)
    n_axis = grid.shape[axis]
    if J is None:
        J = int(math.log2((n_axis - 1) / 4)) - 1
    if bump_width is None:
        bump_width = 0.05 * grid.domain.axes[axis].length
    alpha = 1.0 / p
    return {
        "constant": constant(grid),
        "smooth": eigen_mode(grid, 2),
        "lipschitz": lipschitz_kink(grid),
        "lacunary_critical": lacunary(grid, alpha, J, "one", seed),
        "lacunary_damped": lacunary(grid, alpha, J, "1/j", seed),
        "boundary_bump": boundary_bump(grid, bump_width),
    }
