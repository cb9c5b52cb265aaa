"""Knot-parametrized symmetric CDF on [-1, 1] and inverse-transform sampling.

The left half of the CDF is a monotone piecewise cubic through the fixed
endpoints (-1, 0) and (0, 0.5) plus ``n`` interior knots, with Steffen's
derivative limiter.  The right half follows from ``F(x) = 1 - F(-x)``.

All numeric kernels accept a leading batch axis so the engine can build
and invert one interpolant per repetition in a single numpy pass.  The
scalar API (:func:`build_interpolant`, :func:`pcf_eval`, ...) is a thin
wrapper over the same kernels.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, KnotValidationError

MIN_GAP = 1e-9
NEWTON_MAX_ITER = 200
START_SLOPES = ("auto", "zero", "secant")
COLLINEAR_TOL = 1e-12


@dataclass(frozen=True)
class KnotSet:
    """Interior knots ``(xs, ys)``; endpoints are implicit.

    ``start_slope`` selects the derivative at x=-1: ``"zero"`` (the border
    condition of the construction) or ``"secant"``, the first secant slope.
    ``"auto"`` means zero unless all points, endpoints included, lie on one
    line, so collinear knots reproduce the line and give a flat density.
    """

    xs: tuple[float, ...]
    ys: tuple[float, ...]
    start_slope: str = "auto"

    def __post_init__(self):
        object.__setattr__(self, "xs", tuple(float(v) for v in self.xs))
        object.__setattr__(self, "ys", tuple(float(v) for v in self.ys))
        if self.start_slope not in START_SLOPES:
            raise ValueError(f"start_slope must be one of {START_SLOPES}")

    @property
    def n(self) -> int:
        return len(self.xs)

    @property
    def secant_start(self) -> bool:
        """Whether the derivative at x=-1 is the first secant slope."""
        if self.start_slope != "auto":
            return self.start_slope == "secant"
        X, Y = full_points(self.xs, self.ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.diff(Y) / np.diff(X)
        return bool(np.all(np.isfinite(s)) and np.max(np.abs(s - s[0])) <= COLLINEAR_TOL * max(1.0, abs(s[0])))

    @classmethod
    def uniform(cls, n: int = 2) -> "KnotSet":
        """Collinear knots reproducing the uniform density on [-1, 1]."""
        xs = [-1.0 + k / (n + 1) for k in range(1, n + 1)]
        return cls(xs, [(x + 1.0) / 2.0 for x in xs], start_slope="secant")

    def to_dict(self) -> dict:
        out = {"xs": list(self.xs), "ys": list(self.ys)}
        if self.start_slope != "auto":
            out["start_slope"] = self.start_slope
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "KnotSet":
        return cls(data["xs"], data["ys"], data.get("start_slope", "auto"))

    @classmethod
    def load(cls, path) -> "KnotSet":
        """Read ``{"xs", "ys"}`` JSON, bare or nested under a ``"knots"`` key."""
        data = json.loads(Path(path).read_text())
        return cls.from_dict(data.get("knots", data))


@dataclass(frozen=True, eq=False)
class PcfInterpolant:
    """Piecewise cubic over breakpoints ``x`` (length n+2).

    ``coeffs[j] = (a, b, c, d)`` so that on ``[x[j], x[j+1]]`` the left-half
    CDF is ``a t^3 + b t^2 + c t + d`` with ``t = x - x[j]``.
    """

    x: np.ndarray
    y: np.ndarray
    dydx: np.ndarray
    coeffs: np.ndarray
    knots: KnotSet


def validate_knots(knots: KnotSet) -> list[str]:
    """Return every violated constraint; an empty list means the set is valid."""
    xs, ys = list(knots.xs), list(knots.ys)
    problems = []
    if len(xs) != len(ys):
        problems.append(f"length mismatch: {len(xs)} xs vs {len(ys)} ys")
        return problems
    if not xs:
        problems.append("at least one interior knot is required")
        return problems
    if not all(np.isfinite(xs + ys)):
        problems.append("non-finite knot coordinate")
        return problems
    full_x = [-1.0] + xs + [0.0]
    for k in range(len(full_x) - 1):
        if full_x[k + 1] - full_x[k] < MIN_GAP:
            problems.append(
                f"ordering: x[{k}]={full_x[k]!r} and x[{k + 1}]={full_x[k + 1]!r} "
                f"not strictly ascending (min gap {MIN_GAP})"
            )
    full_y = [0.0] + ys + [0.5]
    for k in range(len(full_y) - 1):
        if full_y[k + 1] < full_y[k]:
            problems.append(
                f"monotonicity: y[{k}]={full_y[k]!r} > y[{k + 1}]={full_y[k + 1]!r}"
            )
    return problems


def check_knots(knots: KnotSet) -> None:
    problems = validate_knots(knots)
    if problems:
        raise KnotValidationError(problems)


def full_points(xs, ys):
    """Attach the fixed endpoints along the last axis."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    shape = xs.shape[:-1] + (1,)
    X = np.concatenate([np.full(shape, -1.0), xs, np.zeros(shape)], axis=-1)
    Y = np.concatenate([np.zeros(shape), ys, np.full(shape, 0.5)], axis=-1)
    return X, Y


def steffen_derivatives(X, Y, secant_start=False):
    """Knot derivatives with Steffen's limiter, batched over leading axes.

    Boundary conditions: zero slope at x=-1 (or the first secant slope when
    ``secant_start``), last secant slope at x=0.
    """
    h = np.diff(X, axis=-1)
    s = np.diff(Y, axis=-1) / h
    s_prev, s_next = s[..., :-1], s[..., 1:]
    h_prev, h_next = h[..., :-1], h[..., 1:]
    p = (s_prev * h_next + s_next * h_prev) / (h_prev + h_next)
    smin = np.minimum(np.abs(s_prev), np.abs(s_next))
    inner = np.where(np.abs(p) > 2.0 * smin, 2.0 * np.sign(s_next) * smin, p)
    inner = np.where(s_prev * s_next <= 0.0, 0.0, inner)
    first = s[..., :1] if secant_start else np.zeros(X.shape[:-1] + (1,))
    last = s[..., -1:]
    return np.concatenate([first, inner, last], axis=-1), h, s


def cubic_coefficients(X, Y, secant_start=False):
    """Per-segment (a, b, c, d) in the local variable ``t = x - x_j``."""
    dy, h, s = steffen_derivatives(X, Y, secant_start)
    d0, d1 = dy[..., :-1], dy[..., 1:]
    a = (d0 + d1 - 2.0 * s) / h**2
    b = (3.0 * s - 2.0 * d0 - d1) / h
    return np.stack([a, b, d0, Y[..., :-1]], axis=-1), dy


def build_interpolant(knots: KnotSet) -> PcfInterpolant:
    check_knots(knots)
    X, Y = full_points(knots.xs, knots.ys)
    coeffs, dy = cubic_coefficients(X, Y, knots.secant_start)
    for arr in (X, Y, dy, coeffs):
        arr.setflags(write=False)
    return PcfInterpolant(X, Y, dy, coeffs, knots)


def _left_value(X, coeffs, xl, derivative=False):
    # xl in [-1, 0]; X is a single breakpoint vector
    j = np.clip(np.searchsorted(X[1:-1], xl, side="right"), 0, len(X) - 2)
    a, b, c, d = (coeffs[j, k] for k in range(4))
    t = xl - X[j]
    if derivative:
        return c + t * (2.0 * b + 3.0 * a * t)
    return d + t * (c + t * (b + t * a))


def _as_domain(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) > 1.0):
        raise DomainError("x must lie in [-1, 1]")
    return x


def pcf_eval(interp: PcfInterpolant, x):
    """Symmetric CDF value(s) at ``x``; exact at -1, 0 and 1."""
    x = _as_domain(x)
    left = _left_value(interp.x, interp.coeffs, -np.abs(x))
    out = np.where(x > 0.0, 1.0 - left, left)
    out = np.where(x == -1.0, 0.0, out)
    out = np.where(x == 0.0, 0.5, out)
    out = np.where(x == 1.0, 1.0, out)
    return out if out.ndim else float(out)


def pdf_eval(interp: PcfInterpolant, x):
    """Density, the analytic derivative of the CDF; even in ``x``."""
    x = _as_domain(x)
    out = _left_value(interp.x, interp.coeffs, -np.abs(x), derivative=True)
    return out if out.ndim else float(out)


def invert_left(X, Y, coeffs, u):
    """Leftmost ``x`` in [-1, 0] with left-half CDF equal to ``u`` in [0, 0.5].

    ``X, Y`` have shape ``(..., n+2)``, ``coeffs`` ``(..., n+1, 4)``; ``u`` has
    shape ``(..., k)`` with the same leading axes (k samples per knot set).
    """
    n_seg = X.shape[-1] - 1
    j = np.minimum((u[..., None] > Y[..., None, 1:]).sum(axis=-1), n_seg - 1)
    # one gather for every per-segment quantity: x_j, h, y_j, dy, a, b, c
    seg = np.concatenate(
        [X[..., :-1, None], np.diff(X, axis=-1)[..., None],
         Y[..., :-1, None], np.diff(Y, axis=-1)[..., None], coeffs[..., :3]],
        axis=-1,
    )
    xj, h, yj, dy, a, b, c = np.moveaxis(np.take_along_axis(seg, j[..., None], axis=-2), -1, 0)
    target = u - yj

    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(dy > 0.0, h * target / dy, 0.0)
    t = np.clip(np.nan_to_num(t), 0.0, h)
    t = np.where(target <= 0.0, 0.0, t)

    # safeguarded Newton; entries freeze once solved or once the bracket collapses
    live = target > 0.0
    lo, hi = np.zeros_like(t), h
    for _ in range(NEWTON_MAX_ITER):
        g = t * (c + t * (b + t * a)) - target
        mid = 0.5 * (lo + hi)
        live &= (np.abs(g) > 1e-14) & (mid > lo) & (mid < hi)
        if not live.any():
            break
        above = g > 0.0
        hi = np.where(live & above, t, hi)
        lo = np.where(live & ~above, t, lo)
        slope = c + t * (2.0 * b + 3.0 * a * t)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = t - g / slope
        inside = (newton > lo) & (newton < hi)
        t = np.where(live, np.where(inside, newton, 0.5 * (lo + hi)), t)
    return np.minimum(xj + t, 0.0)


def invert_symmetric(X, Y, coeffs, u):
    """Batched inverse CDF on [-1, 1]; see :func:`invert_left` for shapes."""
    upper = u > 0.5
    x = invert_left(X, Y, coeffs, np.where(upper, 1.0 - u, u))
    x = np.where(upper, -x, x)
    return np.where(u == 0.5, 0.0, x)


def inverse_sample(interp: PcfInterpolant, u):
    """Map uniform variate(s) ``u`` in [0, 1] to mutation(s) in [-1, 1]."""
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any((arr < 0.0) | (arr > 1.0)):
        raise DomainError("u must be a finite value in [0, 1]")
    flat = arr.reshape(1, -1)
    out = invert_symmetric(
        interp.x[None], interp.y[None], interp.coeffs[None], flat
    ).reshape(arr.shape)
    return out if out.ndim else float(out)


def scale_arrays(xs, ys, w):
    """Scale interior knots by ``w`` (broadcast), clamping into the valid region.

    ``xs, ys`` have shape ``(..., n)`` and ``w`` broadcasts against ``(...)``.
    Clamps keep ``x_1 > -1`` and ``y_n < 0.5`` with strict ordering preserved.
    """
    w = np.asarray(w, dtype=float)[..., None]
    n = np.shape(xs)[-1]
    k = np.arange(1, n + 1)
    # twice the minimum gap so the clamped spacing survives rounding near -1
    sx = np.maximum(w * xs, -1.0 + 2.0 * MIN_GAP * k)
    sy = np.minimum(w * ys, 0.5 - MIN_GAP * (n + 1 - k))
    return sx, np.maximum(sy, 0.0)


def scale_knots(knots: KnotSet, w: float) -> KnotSet:
    if not (np.isfinite(w) and w > 0.0):
        raise DomainError(f"scale factor must be positive, got {w!r}")
    if w == 1.0:
        return knots
    sx, sy = scale_arrays(np.asarray(knots.xs), np.asarray(knots.ys), w)
    # scaled copies keep the boundary rule of the set they came from
    return KnotSet(sx.tolist(), sy.tolist(), "secant" if knots.secant_start else "zero")


def tabulate(interp: PcfInterpolant, rows: int = 2001):
    """Grid ``(x, F(x), D(x))`` over [-1, 1] for plotting."""
    grid = np.linspace(-1.0, 1.0, rows)
    grid[rows // 2] = 0.0
    return grid, pcf_eval(interp, grid), pdf_eval(interp, grid)
