"""Skew products over the Bernoulli shift with circle fibers.

A step product uses ``g_{w_0}`` as the fiber map over ``w``. The mild
family adds a small base-dependent perturbation

    f_w(x) = g_{w_0}(x) + delta * s(x) * sum_{0<|k|<=W} 2^(-alpha|k|) w_k

with a fixed bump ``s``. Compositions along a base sequence are evaluated on
lifts; stretches where the fiber map is an exact rotation are collapsed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .circle import (CircleMap, circle_dist, north_south, rotation, wrap)
from .symbolic import BiSeq, lyndon_words, metric, shift

DEFAULT_A = 1.02
DEFAULT_B = 1 / 128
DEFAULT_WINDOW = 16
# Constant of the composition error bound gamma = K delta^beta, fitted once
# on the default mild family (see tools in tests/test_skewprod.py) and frozen.
DEFAULT_K = 20.0


class InvalidRegime(ValueError):
    pass


class NotPeriodic(ValueError):
    pass


def bump(x):
    return (1.5 + np.sin(2 * np.pi * x)) / (8 * np.pi)


def dbump(x):
    return np.cos(2 * np.pi * x) / 4


class PerturbedMap(CircleMap):
    """``g + eps * bump`` for a base circle map ``g``."""

    def __init__(self, g: CircleMap, eps: float):
        self.g = g
        self.eps = eps

    def lift(self, x):
        return self.g.lift(x) + self.eps * bump(x)

    def dlift(self, x):
        return self.g.dlift(x) + self.eps * dbump(x)

    def lift_inv(self, y):
        # the perturbation is tiny, so Newton from the unperturbed inverse
        # converges in two steps
        x = self.g.lift_inv(y)
        for _ in range(2):
            x = x - (self.lift(x) - y) / self.dlift(x)
        return x


@dataclass(frozen=True)
class ProductPoint:
    base: BiSeq
    fiber: float

    def __post_init__(self):
        object.__setattr__(self, "fiber", wrap(float(self.fiber)))


def product_dist(p: ProductPoint, q: ProductPoint) -> float:
    return max(metric(p.base, q.base), circle_dist(p.fiber, q.fiber))


class SkewProduct:
    """Mild skew product with a finite window; ``delta == 0`` is a step
    product."""

    def __init__(self, f0: CircleMap, f1: CircleMap, delta: float = 0.0,
                 alpha: float = 1.0, window: int = DEFAULT_WINDOW, K: float = DEFAULT_K):
        if delta < 0 or alpha <= 0 or window < 0:
            raise InvalidRegime("need delta >= 0, alpha > 0, window >= 0")
        self.maps = (f0, f1)
        self.delta = float(delta)
        self.alpha = float(alpha)
        self.window = int(window)
        self.K = float(K)
        k = np.arange(-self.window, self.window + 1)
        self.kernel = np.where(k == 0, 0.0, 2.0 ** (-self.alpha * np.abs(k)))

    @property
    def is_step(self) -> bool:
        return self.delta == 0

    @property
    def b(self) -> float:
        return getattr(self.maps[0], "b", float("nan"))

    @property
    def a(self) -> float:
        return getattr(self.maps[1], "a", float("nan"))

    def lipschitz_bound(self) -> float:
        """Analytic upper bound for max(f', 1/f') over the whole family."""
        x = np.linspace(0, 1, 8193)
        d = np.concatenate([np.atleast_1d(m.dlift(x)) * np.ones_like(x) for m in self.maps])
        cmax = 2 * float(np.sum(self.kernel[self.window + 1:])) if self.window else 0.0
        e = self.delta * cmax / 4
        return float(max(d.max() + e, 1 / (d.min() - e)))

    @property
    def gamma(self) -> float:
        if self.is_step:
            return 0.0
        return gamma_bound(self.delta, self.K, self.lipschitz_bound(), self.alpha)

    def fiber_map(self, sym: int, coef: float) -> CircleMap:
        g = self.maps[int(sym)]
        if self.delta == 0 or coef == 0:
            return g
        return PerturbedMap(g, self.delta * coef)

    def map_at(self, omega: BiSeq) -> CircleMap:
        sym, coef = self.steps(omega, 0, 1)
        return self.fiber_map(sym[0], coef[0])

    def steps(self, omega: BiSeq, lo: int, hi: int):
        """Symbols and perturbation coefficients of the fiber maps over
        ``shift(omega, j)`` for ``j`` in ``lo .. hi-1``."""
        sym = omega.symbols(lo, hi)
        if self.delta == 0 or self.window == 0:
            return sym, np.zeros(hi - lo)
        W = self.window
        return sym, self.coefficients(omega.symbols(lo - W, hi + W))

    def coefficients(self, ext) -> np.ndarray:
        """Perturbation coefficients from symbols extended by ``window`` on
        both sides."""
        if self.delta == 0 or self.window == 0:
            return np.zeros(len(ext) - 2 * self.window)
        return np.convolve(np.asarray(ext, dtype=float), self.kernel, mode="valid")

    def runs(self, omega: BiSeq, lo: int, hi: int):
        """Maximal runs of identical fiber maps as (map, count) pairs."""
        if hi <= lo:
            return []
        return self.runs_of(*self.steps(omega, lo, hi))

    def runs_of(self, sym, coef):
        if len(sym) == 0:
            return []
        cut = np.flatnonzero((np.diff(sym) != 0) | (np.diff(coef) != 0)) + 1
        starts = np.concatenate([[0], cut])
        ends = np.concatenate([cut, [len(sym)]])
        return [(self.fiber_map(sym[i], coef[i]), int(j - i)) for i, j in zip(starts, ends)]


def StepSkew(f0: CircleMap, f1: CircleMap) -> SkewProduct:
    return SkewProduct(f0, f1, delta=0.0)


def MildSkew(f0: CircleMap, f1: CircleMap, delta: float, alpha: float = 1.0,
             window: int = DEFAULT_WINDOW, K: float = DEFAULT_K) -> SkewProduct:
    return SkewProduct(f0, f1, delta, alpha, window, K)


def default_skew(a=DEFAULT_A, b=DEFAULT_B, delta=0.0, alpha=1.0,
                 window=DEFAULT_WINDOW, K=DEFAULT_K) -> SkewProduct:
    return SkewProduct(rotation(b), north_south(a), delta, alpha, window, K)


def _run_forward(m: CircleMap, n: int, x):
    if n == 1:
        return m.lift(x)
    return m.iterate(x, n)


def steps_forward(G: SkewProduct, sym, coef, x, with_deriv=False):
    """Apply the fiber maps given by ``(sym[j], coef[j])`` in increasing j."""
    d = np.ones_like(np.asarray(x, dtype=float))
    for f, n in G.runs_of(sym, coef):
        if with_deriv:
            x, dd = f.iterate_with_deriv(x, n)
            d = d * dd
        else:
            x = f.lift(x) if n == 1 else f.iterate(x, n)
    return (x, d) if with_deriv else x


def steps_backward(G: SkewProduct, sym, coef, x, with_deriv=False):
    """Apply the inverses of the fiber maps in decreasing j."""
    d = np.ones_like(np.asarray(x, dtype=float))
    for f, n in reversed(G.runs_of(sym, coef)):
        if with_deriv:
            x, dd = f.iterate_with_deriv(x, -n)
            d = d * dd
        else:
            x = f.iterate(x, -n)
    return (x, d) if with_deriv else x


def compose_lift(G: SkewProduct, omega: BiSeq, m: int, x):
    """Lift of ``fbar_m[omega](x)``; ``m < 0`` composes inverses over the
    positions ``m .. -1``."""
    if m >= 0:
        return steps_forward(G, *G.steps(omega, 0, m), x)
    return steps_backward(G, *G.steps(omega, m, 0), x)


def compose(G: SkewProduct, omega: BiSeq, m: int, x):
    return wrap(compose_lift(G, omega, m, x))


def compose_with_deriv(G: SkewProduct, omega: BiSeq, m: int, x):
    """(lift of fbar_m[omega](x), derivative of fbar_m[omega] at x)."""
    if m >= 0:
        x, d = steps_forward(G, *G.steps(omega, 0, m), x, with_deriv=True)
    else:
        x, d = steps_backward(G, *G.steps(omega, m, 0), x, with_deriv=True)
    return x, (float(d) if np.ndim(d) == 0 else d)


def _batch_step(G, sym, coef, x, inverse=False):
    g0, g1 = G.maps
    one = (sym == 1)[:, None]
    eps = (G.delta * coef)[:, None]
    if not inverse:
        return np.where(one, g1.lift(x), g0.lift(x)) + eps * bump(x)
    y = x
    x = np.where(one, g1.lift_inv(y), g0.lift_inv(y))
    if G.delta:
        for _ in range(2):
            f = np.where(one, g1.lift(x), g0.lift(x)) + eps * bump(x) - y
            d = np.where(one, g1.dlift(x), g0.dlift(x)) + eps * dbump(x)
            x = x - f / d
    return x


def fiber_step(G: SkewProduct, sym, coef, x, inverse=False):
    """One fiber step per element: the map for ``(sym[i], coef[i])`` (or its
    inverse) applied to ``x[i]``."""
    x = np.asarray(x, dtype=float)[:, None]
    return _batch_step(G, np.asarray(sym), np.asarray(coef, dtype=float), x, inverse)[:, 0]


def batch_compose_lift(G: SkewProduct, seqs, m: int, x):
    """``compose_lift`` for many base sequences at once; ``x`` has shape
    (len(seqs), k) and row i is moved along ``seqs[i]``."""
    x = np.array(x, dtype=float)
    lo, hi = (0, m) if m >= 0 else (m, 0)
    if hi == lo:
        return x
    data = [G.steps(s, lo, hi) for s in seqs]
    sym = np.stack([d[0] for d in data])
    coef = np.stack([d[1] for d in data])
    order = range(hi - lo) if m >= 0 else range(hi - lo - 1, -1, -1)
    for j in order:
        x = _batch_step(G, sym[:, j], coef[:, j], x, inverse=m < 0)
    return x


def apply(G: SkewProduct, p: ProductPoint) -> ProductPoint:
    return ProductPoint(shift(p.base, 1), compose(G, p.base, 1, p.fiber))


def apply_inv(G: SkewProduct, p: ProductPoint) -> ProductPoint:
    return ProductPoint(shift(p.base, -1), compose(G, p.base, -1, p.fiber))


def orbit_fibers(G: SkewProduct, omega: BiSeq, x, lo: int, hi: int) -> np.ndarray:
    """Fibers of ``G^k(omega, x)`` for ``k = lo .. hi`` (inclusive), with
    ``lo <= 0 <= hi``. Works on arrays of fibers (one row per index)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((hi - lo + 1,) + x.shape)
    out[-lo] = x
    sym, coef = G.steps(omega, lo, hi)
    cur = x
    for k in range(0, hi):
        cur = G.fiber_map(sym[k - lo], coef[k - lo]).lift(cur)
        out[k + 1 - lo] = cur
    cur = x
    for k in range(-1, lo - 1, -1):
        cur = G.fiber_map(sym[k - lo], coef[k - lo]).lift_inv(cur)
        out[k - lo] = cur
    return wrap(out)


def gamma_bound(delta: float, K: float, L: float, alpha: float) -> float:
    if not (L >= 1 and alpha > 0 and delta >= 0):
        raise InvalidRegime("need L >= 1, alpha > 0, delta >= 0")
    beta = 1 - math.log(L) / (alpha * math.log(2))
    if beta <= 0:
        raise InvalidRegime(f"exponent beta = {beta} <= 0 (L >= 2^alpha)")
    if delta == 0:
        return 0.0
    return K * delta ** beta


def agreeing_composition_gaps(G: SkewProduct, m: int, pairs: int = 500, seed: int = 0,
                              n_fiber: int = 64) -> np.ndarray:
    """C^0 distances between ``fbar_{+-m}[w]`` and ``fbar_{+-m}[w']`` for
    random pairs agreeing on positions ``-m .. m-1`` (one value per pair,
    the larger of the forward and backward distance on a fiber grid)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    H = m + G.window + 2

    def rand(n):
        return "".join(map(str, rng.integers(0, 2, n)))

    A, B = [], []
    for _ in range(pairs):
        core = rand(2 * H)
        mid = core[H - m: H + m]
        core2 = rand(H - m) + mid + rand(H - m)
        A.append(BiSeq.make(rand(3), core, rand(3), -H))
        B.append(BiSeq.make(rand(3), core2, rand(3), -H))
    grid = np.tile(np.arange(n_fiber) / n_fiber, (pairs, 1))
    out = np.zeros(pairs)
    for mm in (m, -m):
        fa = batch_compose_lift(G, A, mm, grid)
        fb = batch_compose_lift(G, B, mm, grid)
        out = np.maximum(out, circle_dist(fa, fb).max(axis=1))
    return out


def holder_and_lipschitz_audit(G: SkewProduct, samples: int = 2000, seed: int = 0, n_fiber=64):
    """Sampled Lipschitz constant of the fiber maps and Holder constant of
    ``w -> f_w`` in C^0. Returns ``(L_est, C_est, passed)``."""
    if samples < 1000:
        raise ValueError("samples must be >= 1000")
    rng = np.random.default_rng(seed)
    W = G.window
    grid = np.arange(n_fiber) / n_fiber
    L_est = 1.0
    C_est = 0.0
    for _ in range(samples):
        w = "".join(map(str, rng.integers(0, 2, 2 * W + 2)))
        om = BiSeq.make("0", w, "0", -W - 1)
        x = np.concatenate([grid, rng.random(8)])
        d = G.map_at(om).dlift(x)
        L_est = max(L_est, float(np.max(d)), float(np.max(1 / d)))
        # partner agreeing on [-k, k-1] and differing right outside
        k = int(rng.integers(1, W + 1))
        pos = k if rng.random() < 0.5 else -k - 1
        i = pos + W + 1
        w2 = w[:i] + ("1" if w[i] == "0" else "0") + w[i + 1:]
        om2 = BiSeq.make("0", w2, "0", -W - 1)
        dist = metric(om, om2)
        c0 = float(np.max(circle_dist(G.map_at(om)(grid), G.map_at(om2)(grid))))
        C_est = max(C_est, c0 / dist ** G.alpha)
    return L_est, C_est, L_est < 2 ** G.alpha


def classify_periodic(G: SkewProduct, p: ProductPoint, m_p: int, tol=1e-9):
    """Type of a periodic point from the derivative of its fiber return map.

    Returns ``(kind, derivative)`` with kind in type21/type12/nonhyperbolic.
    """
    base = p.base
    if not base.is_periodic or m_p % len(base.right):
        raise NotPeriodic("base is not periodic with period dividing m_p")
    x, d = compose_with_deriv(G, base, m_p, p.fiber)
    if d > 1:
        # a strong repeller amplifies rounding errors forward; check
        # fixedness with the contracting inverse return map instead
        x = compose_lift(G, base, -m_p, p.fiber)
    if circle_dist(x, p.fiber) > tol:
        raise NotPeriodic(f"fiber moved by {circle_dist(x, p.fiber):.3g} under the return map")
    if abs(d - 1) <= tol:
        return "nonhyperbolic", d
    return ("type21" if d < 1 else "type12"), d


@dataclass(frozen=True)
class PeriodicPoint:
    word: str
    fiber: float
    kind: str
    derivative: float

    @property
    def point(self) -> ProductPoint:
        return ProductPoint(BiSeq.periodic(self.word), self.fiber)

    @property
    def period(self) -> int:
        return len(self.word)


def return_fixed_points(G: SkewProduct, word: str, fiber_grid: int = 512):
    """Fixed points of the fiber return map over ``periodic(word)``,
    located by sign changes of the lift displacement and refined by brentq."""
    om = BiSeq.periodic(word)
    n = len(word)
    grid = np.arange(fiber_grid + 1) / fiber_grid
    disp = compose_lift(G, om, n, grid) - grid
    # fixed points on the circle are where the displacement hits an integer
    shiftn = math.floor(disp.max())
    if shiftn < disp.min():
        return []
    disp = disp - shiftn
    roots = []
    for i in range(fiber_grid):
        if disp[i] == 0:
            roots.append(grid[i])
        elif disp[i] * disp[i + 1] < 0:
            roots.append(brentq(lambda t: compose_lift(G, om, n, t) - t - shiftn, grid[i], grid[i + 1],
                                xtol=1e-15, maxiter=200))
    return sorted(set(wrap(r) for r in roots))


def find_periodic_points(G: SkewProduct, max_base_period: int, fiber_grid: int = 512):
    if max_base_period > 12:
        raise ValueError("max_base_period above the combinatorial budget of 12")
    out = []
    for w in lyndon_words(max_base_period):
        om = BiSeq.periodic(w)
        for r in return_fixed_points(G, w, fiber_grid):
            kind, d = classify_periodic(G, ProductPoint(om, r), len(w))
            out.append(PeriodicPoint(w, r, kind, d))
    return sorted(out, key=lambda p: (len(p.word), p.word, p.fiber))


def v_set_hull(G: SkewProduct, word: str, x: float, direction: int):
    """Arc containing ``{fbar_{+-m}[w](x) : w in C_word}`` with the word
    anchored at ``-m .. m-1``: the value over the periodic extension padded
    by gamma (zero padding for a step product)."""
    from .circle import Arc
    if len(word) % 2:
        raise ValueError("word length must be even")
    m = len(word) // 2
    rep = BiSeq.periodic(word, m)
    v = compose(G, rep, m if direction > 0 else -m, x)
    return Arc.centered(v, G.gamma)


@dataclass
class RegimeItem:
    name: str
    lhs: float
    rhs: float
    passed: bool

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def regime_constants(a, b, delta, T):
    S = math.floor(1 / (b - delta))
    N = (T * S + 1) * (S + 1) + T * S + 1
    return S, N


def check_parameter_regime(a=DEFAULT_A, b=DEFAULT_B, delta=0.0, alpha=1.0, T=7,
                           K=DEFAULT_K, window=DEFAULT_WINDOW):
    """Evaluate the smallness conditions behind the word algorithms.

    Every item is stated as ``lhs < rhs``.
    """
    S, N = regime_constants(a, b, delta, T)
    G = SkewProduct(rotation(b) if 0 < b < 0.01 else _RawRotation(b), north_south(a),
                    delta, alpha, window, K)
    L = G.lipschitz_bound()
    try:
        gamma = G.gamma
        beta_ok = True
    except InvalidRegime:
        gamma, beta_ok = float("inf"), False
    # fixed points of the perturbed maps near 0 and 1/2 move by at most
    # |perturbation| / |g1' - 1|
    pert = delta * 2 * float(np.max(bump(np.linspace(0, 1, 1025))))
    drift = pert / min(a - 1, 1 - 1 / a)
    items = [
        RegimeItem("b < 1/100", b, 0.01, b < 0.01),
        RegimeItem("1 < a - delta", 1.0, a - delta, a - delta > 1),
        RegimeItem("L < 2^alpha", L, 2 ** alpha, L < 2 ** alpha and beta_ok),
        RegimeItem("1 < (a-delta)(1-delta)^N", 1.0, (a - delta) * (1 - delta) ** N,
                   (a - delta) * (1 - delta) ** N > 1),
        RegimeItem("gamma < b/40", gamma, b / 40, gamma < b / 40),
        RegimeItem("3b + 2gamma < 1/16", 3 * b + 2 * gamma, 1 / 16, 3 * b + 2 * gamma < 1 / 16),
        RegimeItem("0 < |bar W|", 0.0, 0.25 - 6 * gamma, 0.25 - 6 * gamma > 0),
        RegimeItem("hull(P), hull(Q) inside bar W", drift + gamma, 0.125 - 3 * gamma,
                   drift + gamma < 0.125 - 3 * gamma),
    ]
    return {"S": S, "N": N, "T": T, "L": L, "gamma": gamma, "items": items,
            "passed": all(i.passed for i in items)}


class _RawRotation(CircleMap):
    """Rotation without the angle range check, for regime reports only."""

    def __init__(self, b):
        self.b = b

    def lift(self, x):
        return x + self.b

    def dlift(self, x):
        return np.ones_like(np.asarray(x, dtype=float)) if np.ndim(x) else 1.0

    def lift_inv(self, y):
        return y - self.b
