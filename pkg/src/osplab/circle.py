"""Circle arithmetic on R/Z and the two concrete fiber diffeomorphisms.

Maps are handled through their lifts to R (monotone, ``F(x+1) = F(x)+1``),
which keeps compositions and arc images free of wrap-around bookkeeping.
Every method accepts a float or a numpy array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TOL = 1e-12


class InvalidParameter(ValueError):
    pass


class DegenerateArc(ValueError):
    pass


def wrap(x):
    """Canonical representative in [0, 1)."""
    y = np.mod(x, 1.0)
    if np.ndim(y) == 0:
        y = float(y)
        return 0.0 if y >= 1.0 else y
    y[y >= 1.0] = 0.0
    return y


def circle_dist(x, y):
    d = np.mod(np.asarray(x, dtype=float) - y, 1.0)
    d = np.minimum(d, 1.0 - d)
    return float(d) if d.ndim == 0 else d


def signed_delta(x, y):
    """Representative of ``x - y`` in [-1/2, 1/2)."""
    d = np.mod(np.asarray(x, dtype=float) - y + 0.5, 1.0) - 0.5
    return float(d) if d.ndim == 0 else d


class CircleMap:
    """Orientation preserving circle diffeomorphism given by its lift.

    Subclasses implement ``lift`` and ``dlift``; ``lift_inv`` defaults to a
    safeguarded Newton solve.
    """

    def lift(self, x):
        raise NotImplementedError

    def dlift(self, x):
        raise NotImplementedError

    def lift_inv(self, y):
        y = np.asarray(y, dtype=float)
        x = y.copy()
        lo, hi = y - 1.0, y + 1.0
        for _ in range(100):
            fx = self.lift(x) - y
            if np.all(np.abs(fx) <= 4e-16 * np.maximum(1.0, np.abs(y))):
                break
            lo = np.where(fx < 0, x, lo)
            hi = np.where(fx > 0, x, hi)
            step = x - fx / self.dlift(x)
            x = np.where((step > lo) & (step < hi), step, 0.5 * (lo + hi))
        return float(x) if x.ndim == 0 else x

    def __call__(self, x):
        return wrap(self.lift(x))

    def deriv(self, x):
        return self.dlift(x)

    def inverse(self, y):
        return wrap(self.lift_inv(y))

    def dlift_inv(self, y):
        return 1.0 / self.dlift(self.lift_inv(y))

    def iterate(self, x, n: int):
        """Lift of the n-th iterate (n may be negative)."""
        f = self.lift if n >= 0 else self.lift_inv
        for _ in range(abs(n)):
            x = f(x)
        return x

    def iterate_with_deriv(self, x, n: int):
        d = np.ones_like(np.asarray(x, dtype=float))
        if n >= 0:
            for _ in range(n):
                d = d * self.dlift(x)
                x = self.lift(x)
        else:
            for _ in range(-n):
                x = self.lift_inv(x)
                d = d / self.dlift(x)
        return x, d


class Identity(CircleMap):
    def lift(self, x):
        return x

    def dlift(self, x):
        return np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else 1.0

    def lift_inv(self, y):
        return y


class Rotation(CircleMap):
    def __init__(self, b: float):
        self.b = b

    def lift(self, x):
        return x + self.b

    def dlift(self, x):
        return np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else 1.0

    def lift_inv(self, y):
        return y - self.b

    def iterate(self, x, n):
        return x + n * self.b

    def iterate_with_deriv(self, x, n):
        return x + n * self.b, (np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else 1.0)

    def __repr__(self):
        return f"Rotation({self.b!r})"


def rotation(b: float) -> Rotation:
    if not 0 < b < 1 / 100:
        raise InvalidParameter(f"rotation angle must lie in (0, 1/100), got {b}")
    return Rotation(b)


def _hermite(t, h, y0, y1, m0, m1):
    t2 = t * t
    t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * m0
            + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * m1)


def _hermite_d(t, h, y0, y1, m0, m1):
    t2 = t * t
    return (((6 * t2 - 6 * t) * y0 + (-6 * t2 + 6 * t) * y1) / h
            + (3 * t2 - 4 * t + 1) * m0 + (3 * t2 - 2 * t) * m1)


class NorthSouth(CircleMap):
    """Linear expansion by ``a`` on the 1/8-neighborhood of 0 (repeller),
    linear contraction by ``1/a`` on the 1/8-neighborhood of 1/2
    (attractor), cubic Hermite pieces in between.
    """

    def __init__(self, a: float):
        self.a = a
        ia = 1.0 / a
        # (x0, x1, y0, y1, m0, m1) for the two connecting pieces
        self._pieces = (
            (0.125, 0.375, a * 0.125, 0.5 - 0.125 * ia, a, ia),
            (0.625, 0.875, 0.5 + 0.125 * ia, 1.0 - 0.125 * a, ia, a),
        )
        grid = np.linspace(0, 1, 8193)
        if np.any(self._dh(grid) <= 0):
            raise InvalidParameter(f"interpolation is not monotone for a={a}")

    def _h(self, u):
        # u in [0, 1)
        a = self.a
        if np.ndim(u) == 0:
            if u <= 0.125:
                return a * u
            if u >= 0.875:
                return 1.0 + a * (u - 1.0)
            if 0.375 <= u <= 0.625:
                return 0.5 + (u - 0.5) / a
            x0, x1, y0, y1, m0, m1 = self._pieces[0 if u < 0.5 else 1]
            return _hermite((u - x0) / (x1 - x0), x1 - x0, y0, y1, m0, m1)
        out = np.empty_like(u)
        lo, hi, mid = u <= 0.125, u >= 0.875, (u >= 0.375) & (u <= 0.625)
        out[lo] = a * u[lo]
        out[hi] = 1.0 + a * (u[hi] - 1.0)
        out[mid] = 0.5 + (u[mid] - 0.5) / a
        for (x0, x1, y0, y1, m0, m1) in self._pieces:
            m = (u > x0) & (u < x1)
            out[m] = _hermite((u[m] - x0) / (x1 - x0), x1 - x0, y0, y1, m0, m1)
        return out

    def _dh(self, u):
        a = self.a
        if np.ndim(u) == 0:
            if u <= 0.125 or u >= 0.875:
                return a
            if 0.375 <= u <= 0.625:
                return 1.0 / a
            x0, x1, y0, y1, m0, m1 = self._pieces[0 if u < 0.5 else 1]
            return _hermite_d((u - x0) / (x1 - x0), x1 - x0, y0, y1, m0, m1)
        out = np.where((u <= 0.125) | (u >= 0.875), a, 1.0 / a).astype(float)
        for (x0, x1, y0, y1, m0, m1) in self._pieces:
            m = (u > x0) & (u < x1)
            out[m] = _hermite_d((u[m] - x0) / (x1 - x0), x1 - x0, y0, y1, m0, m1)
        return out

    def lift(self, x):
        if np.ndim(x) == 0:
            n = math.floor(x)
            return n + self._h(x - n)
        x = np.asarray(x, dtype=float)
        n = np.floor(x)
        return n + self._h(x - n)

    def dlift(self, x):
        if np.ndim(x) == 0:
            return self._dh(x - math.floor(x))
        x = np.asarray(x, dtype=float)
        return self._dh(x - np.floor(x))

    def _hinv_scalar(self, v):
        a = self.a
        if v <= 0.125 * a:
            return v / a
        if v >= 1.0 - 0.125 * a:
            return 1.0 + (v - 1.0) / a
        if 0.5 - 0.125 / a <= v <= 0.5 + 0.125 / a:
            return 0.5 + (v - 0.5) * a
        x0, x1, y0, y1, m0, m1 = self._pieces[0 if v < 0.5 else 1]
        lo, hi = x0, x1
        u = x0 + (v - y0) * (x1 - x0) / (y1 - y0)
        for _ in range(60):
            t = (u - x0) / (x1 - x0)
            f = _hermite(t, x1 - x0, y0, y1, m0, m1) - v
            if abs(f) <= 4e-16:
                break
            if f > 0:
                hi = u
            else:
                lo = u
            nu = u - f / _hermite_d(t, x1 - x0, y0, y1, m0, m1)
            u = nu if lo < nu < hi else 0.5 * (lo + hi)
        return u

    def lift_inv(self, y):
        if np.ndim(y) == 0:
            n = math.floor(y)
            return n + self._hinv_scalar(y - n)
        y = np.asarray(y, dtype=float)
        n = np.floor(y)
        return n + self._hinv(y - n)

    def _hinv(self, v):
        a = self.a
        out = np.where(v <= 0.125 * a, v / a, 1.0 + (v - 1.0) / a)
        mid = (v >= 0.5 - 0.125 / a) & (v <= 0.5 + 0.125 / a)
        out[mid] = 0.5 + (v[mid] - 0.5) * a
        for (x0, x1, y0, y1, m0, m1) in self._pieces:
            m = (v > y0) & (v < y1)
            if not m.any():
                continue
            t = v[m]
            h = x1 - x0
            lo, hi = np.full(t.shape, x0), np.full(t.shape, x1)
            u = x0 + (t - y0) * h / (y1 - y0)
            for _ in range(60):
                s = (u - x0) / h
                f = _hermite(s, h, y0, y1, m0, m1) - t
                if np.all(np.abs(f) <= 4e-16):
                    break
                hi = np.where(f > 0, u, hi)
                lo = np.where(f < 0, u, lo)
                nu = u - f / _hermite_d(s, h, y0, y1, m0, m1)
                u = np.where((nu > lo) & (nu < hi), nu, 0.5 * (lo + hi))
            out[m] = u
        return out

    def iterate_with_deriv(self, x, n: int):
        """Iterate with closed forms inside the linear zones: the attracting
        zone (repelling zone for n < 0) is absorbing and the exit time from
        the other zone is explicit. Only the connecting arcs are stepped."""
        scalar = np.ndim(x) == 0
        x = np.array(x, dtype=float, ndmin=1)
        d = np.ones_like(x)
        rem = np.full(x.shape, abs(n), dtype=np.int64)
        a, la = self.a, math.log(self.a)
        active = np.flatnonzero(rem > 0)
        while active.size:
            xi = x[active]
            fl = np.floor(xi)
            u = xi - fl
            r = rem[active]
            v = np.where(u > 0.5, u - 1.0, u)
            w = u - 0.5
            nx, nd, nr = np.empty_like(xi), np.empty_like(xi), np.zeros_like(r)
            if n > 0:
                sink, src, src_w, src_lim = np.abs(w) <= 0.125, np.abs(v) <= 0.125, v, 0.125
                nx[sink] = fl[sink] + 0.5 + w[sink] * a ** (-r[sink].astype(float))
                nd[sink] = a ** (-r[sink].astype(float))
            else:
                sink, src, src_w, src_lim = np.abs(v) <= 0.125, np.abs(w) <= 0.125 / a, w, 0.125 / a
                nx[sink] = fl[sink] + (v[sink] < 0) + v[sink] * a ** (-r[sink].astype(float))
                nd[sink] = a ** (-r[sink].astype(float))
            src &= ~sink
            if src.any():
                s = src_w[src]
                with np.errstate(divide="ignore"):
                    kexit = np.floor(np.log(src_lim / np.abs(s)) / la) + 1
                k = np.minimum(r[src], np.where(np.isfinite(kexit), kexit, r[src])).astype(np.int64)
                k = np.maximum(k, 1)
                base = 0.5 if n < 0 else (s < 0).astype(float)
                nx[src] = fl[src] + base + s * a ** k.astype(float)
                nd[src] = a ** k.astype(float)
                nr[src] = r[src] - k
            rest = ~(sink | src)
            if rest.any():
                if n > 0:
                    nx[rest] = fl[rest] + self._h(u[rest])
                    nd[rest] = self._dh(u[rest])
                else:
                    h = self._hinv(u[rest])
                    nx[rest] = fl[rest] + h
                    nd[rest] = 1.0 / self._dh(h)
                nr[rest] = r[rest] - 1
            x[active] = nx
            d[active] *= nd
            rem[active] = nr
            active = active[nr > 0]
        if scalar:
            return float(x[0]), float(d[0])
        return x, d

    def iterate(self, x, n: int):
        if abs(n) <= 2:
            return CircleMap.iterate(self, x, n)
        return self.iterate_with_deriv(x, n)[0]

    def __repr__(self):
        return f"NorthSouth({self.a!r})"


def north_south(a: float) -> NorthSouth:
    if not a > 1:
        raise InvalidParameter(f"expansion constant must exceed 1, got {a}")
    return NorthSouth(a)


class Composition(CircleMap):
    """``maps[-1] o ... o maps[0]``."""

    def __init__(self, maps):
        self.maps = list(maps)

    def lift(self, x):
        for m in self.maps:
            x = m.lift(x)
        return x

    def dlift(self, x):
        d = 1.0
        for m in self.maps:
            d = d * m.dlift(x)
            x = m.lift(x)
        return d

    def lift_inv(self, y):
        for m in reversed(self.maps):
            y = m.lift_inv(y)
        return y


def c1_dist_to_identity(m: CircleMap, grid_size: int = 4096) -> float:
    if grid_size < 256:
        raise InvalidParameter("grid_size must be >= 256")
    x = np.arange(grid_size) / grid_size
    return float(max(np.max(circle_dist(m(x), x)), np.max(np.abs(m.deriv(x) - 1.0))))


@dataclass(frozen=True)
class Arc:
    """Closed arc ``[start, start + length]`` traversed counterclockwise.

    ``length == 0`` is allowed and denotes a single point.
    """

    start: float
    length: float

    def __post_init__(self):
        if not 0 <= self.length < 1:
            raise DegenerateArc(f"arc length must lie in [0, 1), got {self.length}")
        object.__setattr__(self, "start", wrap(self.start))

    @classmethod
    def between(cls, x, y):
        """Arc from ``x`` counterclockwise to ``y``."""
        return cls(x, float(np.mod(y - x, 1.0)))

    @classmethod
    def centered(cls, c, radius):
        return cls(c - radius, 2 * radius)

    @property
    def end(self) -> float:
        return wrap(self.start + self.length)

    @property
    def center(self) -> float:
        return wrap(self.start + self.length / 2)

    def contains(self, x, tol=TOL):
        return np.mod(np.asarray(x) - self.start + tol, 1.0) <= self.length + 2 * tol

    def contains_arc(self, other: "Arc", tol=TOL) -> bool:
        d = float(np.mod(other.start - self.start + tol, 1.0))
        return d + other.length <= self.length + 2 * tol

    def margin_in(self, other: "Arc") -> float:
        """Signed slack of ``self`` inside ``other``: positive iff contained,
        equal to the smaller gap between matching endpoints."""
        d = float(np.mod(self.start - other.start + 0.5 - other.length / 2, 1.0)) - 0.5 + other.length / 2
        return min(d, other.length - d - self.length)

    def pad(self, r: float) -> "Arc":
        return Arc(self.start - r, min(self.length + 2 * r, 1 - 1e-15))

    def shrink(self, r: float) -> "Arc | None":
        if self.length < 2 * r:
            return None
        return Arc(self.start + r, self.length - 2 * r)

    def complement(self) -> "Arc":
        return Arc(self.start + self.length, 1.0 - self.length)

    def sample(self, n: int) -> np.ndarray:
        return wrap(self.start + self.length * np.linspace(0.0, 1.0, n))


def arc_image(m: CircleMap, A: Arc) -> Arc:
    s = m.lift(A.start)
    length = m.lift(A.start + A.length) - s
    if not 0 <= length < 1:
        raise DegenerateArc(f"image arc has length {length}")
    return Arc(s, length)


def point_arc_dist(x, A: Arc):
    """Distance from ``x`` to the closed arc ``A``."""
    t = np.mod(np.asarray(x, dtype=float) - A.start - A.length, 1.0)
    g = 1.0 - A.length
    d = np.where(t >= g, 0.0, np.minimum(t, g - t))
    return float(d) if d.ndim == 0 else d


def _directed(A: Arc, B: Arc) -> float:
    cand = [A.start, A.end]
    far = B.end + (1.0 - B.length) / 2
    if A.contains(far, tol=0.0):
        cand.append(far)
    return float(max(point_arc_dist(x, B) for x in cand))


def hausdorff_arc_dist(A: Arc, B: Arc) -> float:
    return max(_directed(A, B), _directed(B, A))
