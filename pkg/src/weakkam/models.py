"""Periodic Tonelli Lagrangians and the cohomology-shifted discrete action.

The built-in family is the mechanical Lagrangian

    L(x, v) = (m/2) |v|^2 + V(x),

with V a trigonometric polynomial on the unit torus.  A one-dimensional
tabulated family ("custom-table") is available through the Python API for
experiments with non-mechanical kinetic terms.

Points are passed as arrays whose last axis has length ``dimension``; in
dimension one plain scalars and 1-D arrays of positions are accepted too.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import NonConvexModel, UnsupportedModel, WindowSearchFailed

MECHANICAL = "quadratic-kinetic-plus-potential"
CUSTOM_TABLE = "custom-table"
KINDS = (MECHANICAL, CUSTOM_TABLE)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class CustomTable:
    """Tabulated L(x, v) in dimension one.

    ``values[i, j]`` is L at position ``i / len(values)`` and velocity
    ``velocities[j]``.  Linear interpolation is used in both variables;
    beyond the velocity range the table is continued by a parabola that
    matches the end slope and uses the largest tabulated curvature.
    """

    velocities: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.velocities, dtype=float)
        t = np.asarray(self.values, dtype=float)
        if t.ndim != 2 or t.shape[1] != v.size or v.size < 3:
            raise ValueError("values must have shape (n_x, n_v) with n_v >= 3")
        if np.any(np.diff(v) <= 0):
            raise ValueError("velocities must be strictly increasing")
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "values", t)

    def is_convex(self, atol=1e-12):
        slopes = np.diff(self.values, axis=1) / np.diff(self.velocities)
        return bool(np.all(np.diff(slopes, axis=1) >= -atol))

    def _curvature(self):
        slopes = np.diff(self.values, axis=1) / np.diff(self.velocities)
        mids = 0.5 * (self.velocities[1:] + self.velocities[:-1])
        curv = np.diff(slopes, axis=1) / np.diff(mids)
        return max(float(curv.max()), 1e-8)

    def __call__(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        nx = self.values.shape[0]
        s = (x - np.floor(x)) * nx
        i0 = np.floor(s).astype(int) % nx
        i1 = (i0 + 1) % nx
        fx = s - np.floor(s)
        vs = self.velocities
        vc = np.clip(v, vs[0], vs[-1])
        j = np.clip(np.searchsorted(vs, vc, side="right") - 1, 0, vs.size - 2)
        fv = (vc - vs[j]) / (vs[j + 1] - vs[j])
        t = self.values

        def row(i):
            return t[i, j] * (1 - fv) + t[i, j + 1] * fv

        inside = row(i0) * (1 - fx) + row(i1) * fx
        # parabolic continuation outside the tabulated velocity range
        slope_lo = ((t[i0, 1] - t[i0, 0]) * (1 - fx) + (t[i1, 1] - t[i1, 0]) * fx) / (vs[1] - vs[0])
        slope_hi = ((t[i0, -1] - t[i0, -2]) * (1 - fx) + (t[i1, -1] - t[i1, -2]) * fx) / (vs[-1] - vs[-2])
        c = self._curvature()
        lo = v - vs[0]
        hi = v - vs[-1]
        out = np.where(v < vs[0], inside + slope_lo * lo + 0.5 * c * lo**2, inside)
        out = np.where(v > vs[-1], inside + slope_hi * hi + 0.5 * c * hi**2, out)
        return out


@dataclass(frozen=True)
class LagrangianModel:
    """A periodic Tonelli Lagrangian.

    ``potential`` holds terms ``(k, a_cos, a_sin)`` with integer frequency
    vectors ``k``; the potential is
    ``sum a_cos * cos(2 pi k.x) + a_sin * sin(2 pi k.x)``.
    """

    dimension: int = 1
    kind: str = MECHANICAL
    mass: float = 1.0
    potential: tuple = ()
    table: Optional[CustomTable] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        terms = []
        for term in self.potential:
            k, a_cos, a_sin = term
            k = tuple(int(c) for c in np.atleast_1d(k))
            if len(k) != self.dimension:
                raise ValueError(f"frequency {k} does not match dimension {self.dimension}")
            terms.append((k, float(a_cos), float(a_sin)))
        object.__setattr__(self, "potential", tuple(terms))
        if self.kind == CUSTOM_TABLE:
            if self.table is None:
                raise ValueError("custom-table model needs a table")
            if self.dimension != 1:
                raise UnsupportedModel("custom-table models are one-dimensional")

    # -- coordinates -----------------------------------------------------
    def points(self, x):
        """Return ``x`` as an array with a trailing axis of length d."""
        x = np.asarray(x, dtype=float)
        if self.dimension == 1:
            if x.ndim >= 1 and x.shape[-1] == 1 and x.ndim > 1:
                return x
            return x[..., None]
        if x.shape[-1] != self.dimension:
            raise ValueError(f"expected points of dimension {self.dimension}, got shape {x.shape}")
        return x

    def _freqs(self):
        if not self.potential:
            return np.zeros((0, self.dimension)), np.zeros(0), np.zeros(0)
        k = np.array([t[0] for t in self.potential], dtype=float)
        ac = np.array([t[1] for t in self.potential])
        as_ = np.array([t[2] for t in self.potential])
        return k, ac, as_

    def potential_value(self, x):
        x = self.points(x)
        x = x - np.floor(x)
        k, ac, as_ = self._freqs()
        if k.shape[0] == 0:
            return np.zeros(x.shape[:-1])
        phase = TWO_PI * (x @ k.T)
        return np.cos(phase) @ ac + np.sin(phase) @ as_

    def potential_gradient(self, x):
        x = self.points(x)
        x = x - np.floor(x)
        k, ac, as_ = self._freqs()
        if k.shape[0] == 0:
            return np.zeros(x.shape)
        phase = TWO_PI * (x @ k.T)
        coef = TWO_PI * (-np.sin(phase) * ac + np.cos(phase) * as_)
        return coef @ k

    def potential_bounds(self, samples=None):
        """(min V, max V) from a dense scan refined by a local optimizer."""
        if not self.potential:
            return 0.0, 0.0
        lo = _extremum(self.potential_value, self.dimension, 1.0, samples)
        hi = -_extremum(lambda x: -self.potential_value(x), self.dimension, 1.0, samples)
        return lo, hi

    # -- Lagrangian ------------------------------------------------------
    def lagrangian(self, x, v):
        if self.kind == CUSTOM_TABLE:
            x = np.asarray(x, dtype=float)
            v = np.asarray(v, dtype=float)
            return self.table(x, v)
        v = self.points(v)
        kinetic = 0.5 * self.mass * np.sum(v * v, axis=-1)
        return kinetic + self.potential_value(x)

    def dl_dv(self, x, v):
        if self.kind == CUSTOM_TABLE:
            v = np.asarray(v, dtype=float)
            eps = 1e-6 * max(1.0, float(np.max(np.abs(v), initial=0.0)))
            return (self.table(x, v + eps) - self.table(x, v - eps)) / (2 * eps)
        return self.mass * self.points(v)

    def dl_dx(self, x, v):
        if self.kind == CUSTOM_TABLE:
            x = np.asarray(x, dtype=float)
            eps = 1e-7
            return (self.table(x + eps, v) - self.table(x - eps, v)) / (2 * eps)
        return self.potential_gradient(x)


@dataclass(frozen=True)
class DiscreteAction:
    """E(x, y) = tau * L(x, (y - x) / tau) - P.(y - x)."""

    model: LagrangianModel
    tau: float
    p: tuple = ()

    def __post_init__(self):
        if not (0.0 < self.tau <= 1.0):
            raise ValueError("tau must lie in (0, 1]")
        p = tuple(float(c) for c in np.atleast_1d(self.p)) if len(np.atleast_1d(self.p)) else (0.0,) * self.model.dimension
        if len(p) != self.model.dimension:
            raise ValueError("cohomology vector has the wrong dimension")
        object.__setattr__(self, "p", p)

    @property
    def p_vector(self):
        return np.array(self.p)

    def from_displacement(self, x, z):
        """E(x, x + z), evaluated without forming x + z."""
        m = self.model
        if m.dimension == 1:
            z = np.asarray(z, dtype=float)
            v = z / self.tau
            return self.tau * m.lagrangian(x, v) - self.p[0] * z
        z = m.points(z)
        v = z / self.tau
        return self.tau * m.lagrangian(x, v) - z @ self.p_vector


@dataclass(frozen=True)
class AprioriBounds:
    window_radius: float
    lipschitz_bound: float
    action_lower: float
    diagonal_upper: float
    raw_radius: float = field(default=0.0)
    c1: float = field(default=0.0)
    effective_upper: float = field(default=0.0)
    safety: float = field(default=1.0)

    def __post_init__(self):
        if not self.window_radius > 1.0:
            raise ValueError("window radius must exceed 1")
        if not self.lipschitz_bound > 0.0:
            raise ValueError("Lipschitz bound must be positive")


def pendulum(K=1.0, shift=0.0, mass=1.0):
    """V(x) = shift + K/(4 pi^2) (1 - cos 2 pi x), the Frenkel-Kontorova substrate."""
    a = K / (4.0 * np.pi**2)
    return LagrangianModel(dimension=1, mass=mass, potential=(((0,), a + shift, 0.0), ((1,), -a, 0.0)))


def free_particle(dimension=1, mass=1.0):
    return LagrangianModel(dimension=dimension, mass=mass, potential=())


def _scalar(value):
    value = np.asarray(value)
    return float(value) if value.ndim == 0 else value


def eval_lagrangian(model: LagrangianModel, x, v):
    return _scalar(model.lagrangian(x, v))


def eval_discrete_action(action: DiscreteAction, x, y):
    m = action.model
    if m.dimension == 1:
        z = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    else:
        z = m.points(y) - m.points(x)
    return _scalar(action.from_displacement(x, z))


def legendre_transform(model: LagrangianModel, x, p, window_radius=None, tol=1e-10):
    """H(x, p) = sup_v { p.v - L(x, v) }.

    Closed form for the mechanical kind.  For a custom table the supremum
    is searched on the velocity interval of radius ``4 * window_radius``
    (the tabulated range when no radius is given).
    """
    if model.kind == MECHANICAL:
        pp = model.points(p)
        return _scalar(np.sum(pp * pp, axis=-1) / (2.0 * model.mass) - model.potential_value(x))
    table = model.table
    if not table.is_convex():
        raise NonConvexModel("tabulated Lagrangian fails the convexity scan in v")
    radius = 4.0 * window_radius if window_radius is not None else float(np.max(np.abs(table.velocities)))
    x = float(np.asarray(x).reshape(-1)[0])
    p = float(np.asarray(p).reshape(-1)[0])
    vs = np.linspace(-radius, radius, 4001)
    vals = p * vs - table(np.full_like(vs, x), vs)
    j = int(np.argmax(vals))
    a = vs[max(j - 1, 0)]
    b = vs[min(j + 1, vs.size - 1)]
    res = optimize.minimize_scalar(lambda v: -(p * v - float(table(x, v))), bounds=(a, b),
                                   method="bounded", options={"xatol": tol})
    return max(float(-res.fun), float(vals[j]))


def _sample_torus(dimension, samples):
    if samples is None:
        samples = 256 if dimension == 1 else 32
    axes = [np.arange(samples) / samples] * dimension
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _extremum(func, dimension, period, samples=None):
    """Minimum of a periodic function: dense scan then local refinement."""
    pts = _sample_torus(dimension, samples)
    vals = func(pts)
    j = int(np.argmin(vals))
    best = float(vals[j])
    h = 1.0 / (samples or (256 if dimension == 1 else 32))
    if dimension == 1:
        x0 = pts[j, 0]
        res = optimize.minimize_scalar(lambda t: float(func(np.array([[t]]))[0]),
                                       bounds=(x0 - h, x0 + h), method="bounded",
                                       options={"xatol": 1e-12})
        return min(best, float(res.fun))
    res = optimize.minimize(lambda t: float(func(t[None, :])[0]), pts[j], method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
    return min(best, float(res.fun))


def _directions(dimension, count=24):
    if dimension == 1:
        return np.array([[-1.0], [1.0]])
    if dimension == 2:
        ang = np.arange(count) * TWO_PI / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    rng = np.random.default_rng(0)
    d = rng.normal(size=(8 * count, dimension))
    d = np.concatenate([d, np.eye(dimension), -np.eye(dimension)])
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def estimate_bounds(action: DiscreteAction, safety=1.5, radius_step=0.05, radius_ceiling=50.0,
                    samples=None) -> AprioriBounds:
    """Scan-based a-priori constants for the windowed discretization.

    ``C1 = 2 sup_{|y-x| <= tau} (E - E_est) / tau`` with ``E_est`` the
    minimum of the diagonal ``E(x, x)``; the jump bound is the smallest
    ladder radius ``R > 1`` with ``(E - E_est) / |y-x| > C1`` beyond
    ``tau R``.  The returned ``window_radius`` is ``R * safety``.
    """
    if safety < 1.0:
        raise ValueError("safety factor must be >= 1")
    tau = action.tau
    d = action.model.dimension
    xs = _sample_torus(d, samples)
    dirs = _directions(d)

    def diag(pts):
        return action.from_displacement(pts, np.zeros(pts.shape) if d > 1 else np.zeros(pts.shape[0]))

    e_est = _extremum(diag, d, 1.0, samples)
    diag_max = -_extremum(lambda pts: -diag(pts), d, 1.0, samples)

    def scan(radii):
        """Values E(x, x + r u) with shape (radius, direction, point)."""
        out = np.empty((radii.size, dirs.shape[0], xs.shape[0]))
        pts = np.broadcast_to(xs[None, :, :], (dirs.shape[0],) + xs.shape)
        if d == 1:
            pts = pts[..., 0]
        for i, r in enumerate(radii):
            z = np.broadcast_to((r * dirs)[:, None, :], (dirs.shape[0],) + xs.shape)
            out[i] = action.from_displacement(pts, z[..., 0] if d == 1 else z)
        return out

    inner = np.linspace(0.0, tau, 33)
    c1 = 2.0 * float(np.max(scan(inner)) - e_est) / tau

    ladder = 1.0 + radius_step * np.arange(1, int(np.ceil((radius_ceiling - 1.0) / radius_step)) + 1)
    tail = ladder[-1] * np.geomspace(1.0, 8.0, 17)[1:]
    tail_ratio = (scan(tau * tail).min(axis=(1, 2)) - e_est) / (tau * tail)
    # inf over |y - x| > tau R, via a suffix minimum over the sampled radii;
    # the ladder is scanned in chunks so that small R stops early
    ratio = np.empty(0)
    raw = None
    chunk = 40
    for start in range(0, ladder.size, chunk):
        radii = tau * ladder[start:start + chunk]
        ratio = np.concatenate([ratio, (scan(radii).min(axis=(1, 2)) - e_est) / radii])
        probe = tau * ladder[min(start + chunk, ladder.size - 1):][::chunk]
        rest = (scan(probe).min(axis=(1, 2)) - e_est) / probe if probe.size else np.empty(0)
        beyond = min(tail_ratio.min(), rest.min(initial=np.inf))
        suffix = np.minimum(np.minimum.accumulate(ratio[::-1])[::-1], beyond)
        ok = np.nonzero(suffix > c1)[0]
        if ok.size and ok[0] < ratio.size - 1:
            raw = float(ladder[ok[0]])
            break
    if raw is None:
        raise WindowSearchFailed(f"no window radius below {radius_ceiling} passes the superlinearity test")

    # Lipschitz constant of E(x, .) on the ball of radius tau (R + 1)
    ball = np.linspace(0.0, tau * (raw + 1.0), 41)
    grads = []
    for r in ball:
        for u in dirs:
            z = np.broadcast_to(r * u, xs.shape)
            g = action.model.dl_dv(xs if d > 1 else xs[:, 0], (z / tau) if d > 1 else z[:, 0] / tau)
            g = np.asarray(g, dtype=float)
            if d == 1:
                g = g.reshape(-1, 1)
            grads.append(np.linalg.norm(g - action.p_vector, axis=-1).max())
    lip = max(c1, float(max(grads)))

    big = tau * max(raw * safety, 2.0)
    lower_radii = np.concatenate([[0.0], np.geomspace(1e-6 * big, big, 96)])
    lower = float(scan(lower_radii).min())
    if action.model.kind == MECHANICAL:
        vmin, _ = action.model.potential_bounds(samples)
        pn = float(np.linalg.norm(action.p_vector))
        lower = min(lower, tau * (vmin - pn * pn / (2.0 * action.model.mass)))
    return AprioriBounds(
        window_radius=raw * safety,
        lipschitz_bound=lip,
        action_lower=lower / tau,
        diagonal_upper=diag_max / tau,
        raw_radius=raw,
        c1=c1,
        effective_upper=e_est,
        safety=safety,
    )


def model_from_terms(terms: Sequence, dimension=1, mass=1.0):
    """Build a mechanical model from ``[[k, a_cos, a_sin], ...]`` lists."""
    return LagrangianModel(dimension=dimension, mass=mass,
                           potential=tuple((tuple(np.atleast_1d(k)), a, b) for k, a, b in terms))
