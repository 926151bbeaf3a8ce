"""Exact symbolic dynamics on the full two-sided 2-shift.

Points of the shift space are stored as eventually periodic bi-infinite
sequences: a left periodic tail, a finite core, and a right periodic tail.
Words are plain strings over ``"01"``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class InvalidInput(ValueError):
    pass


def check_word(w: str, allow_empty=False) -> str:
    if not allow_empty and not w:
        raise InvalidInput("empty word")
    if set(w) - {"0", "1"}:
        raise InvalidInput(f"not a binary word: {w!r}")
    return w


def primitive_root(w: str) -> str:
    """Shortest ``u`` with ``w == u * k``."""
    n = len(w)
    for p in range(1, n + 1):
        if n % p == 0 and w[:p] * (n // p) == w:
            return w[:p]
    return w


def is_primitive(w: str) -> bool:
    return primitive_root(w) == w


def rotations(w: str) -> list[str]:
    return [w[k:] + w[:k] for k in range(len(w))]


def cyclic_class(w: str) -> str:
    """Lexicographically least rotation, used as a class key."""
    return min(rotations(w))


def lyndon_words(max_len: int) -> list[str]:
    """Primitive binary words up to ``max_len``, one per cyclic class, sorted
    by (length, word)."""
    out = []
    for n in range(1, max_len + 1):
        for i in range(2 ** n):
            w = format(i, f"0{n}b")
            if is_primitive(w) and cyclic_class(w) == w:
                out.append(w)
    return out


def zero_run_constraint(w: str, T: int) -> bool:
    """True iff every maximal run of zeros in ``w`` has length >= T.

    A word with no zeros satisfies the constraint.
    """
    if T < 1:
        raise InvalidInput("T must be >= 1")
    return all(len(run) >= T for run in w.split("1") if run)


@dataclass(frozen=True)
class BiSeq:
    """Eventually periodic two-sided binary sequence.

    ``core`` occupies positions ``offset .. offset+len(core)-1``; positions
    to the right repeat ``right`` starting with ``right[0]``; positions to
    the left repeat ``left`` so that position ``offset-1`` holds
    ``left[-1]``. Instances are always built through :meth:`make`, which
    normalizes, so field equality is sequence equality.
    """

    left: str
    core: str
    right: str
    offset: int

    @classmethod
    def make(cls, left: str, core: str, right: str, offset: int = 0) -> "BiSeq":
        check_word(left)
        check_word(right)
        check_word(core, allow_empty=True)
        return _normalize(primitive_root(left), core, primitive_root(right), int(offset))

    @classmethod
    def periodic(cls, w: str, phase: int = 0) -> "BiSeq":
        """Periodic sequence with ``w[phase % len(w)]`` at position 0."""
        check_word(w)
        r = primitive_root(w)
        k = phase % len(r)
        rot = r[k:] + r[:k]
        return cls(rot, "", rot, 0)

    @property
    def end(self) -> int:
        return self.offset + len(self.core)

    @cached_property
    def is_periodic(self) -> bool:
        return not self.core and self.left == self.right and self.offset == 0

    def __getitem__(self, i: int) -> int:
        o, e = self.offset, self.end
        if i >= e:
            return int(self.right[(i - e) % len(self.right)])
        if i < o:
            return int(self.left[(i - o) % len(self.left)])
        return int(self.core[i - o])

    def symbols(self, lo: int, hi: int) -> np.ndarray:
        """Symbols at positions ``lo .. hi-1`` as an int8 array."""
        idx = np.arange(lo, hi)
        out = np.empty(idx.size, dtype=np.int8)
        o, e = self.offset, self.end
        L = np.frombuffer(self.left.encode(), dtype=np.uint8) - 48
        R = np.frombuffer(self.right.encode(), dtype=np.uint8) - 48
        m = idx < o
        out[m] = L[(idx[m] - o) % L.size]
        m = idx >= e
        out[m] = R[(idx[m] - e) % R.size]
        m = (idx >= o) & (idx < e)
        if m.any():
            C = np.frombuffer(self.core.encode(), dtype=np.uint8) - 48
            out[m] = C[idx[m] - o]
        return out

    def word(self, lo: int, hi: int) -> str:
        return "".join(map(str, self.symbols(lo, hi)))

    def horizon(self) -> int:
        """Radius beyond which both tails are purely periodic."""
        return max(abs(self.offset), abs(self.end)) + len(self.left) + len(self.right)

    def encode(self) -> str:
        return f"left={self.left} core={self.core or '-'} right={self.right} offset={self.offset}"

    @classmethod
    def decode(cls, text: str) -> "BiSeq":
        try:
            fields = dict(item.split("=", 1) for item in text.split())
            core = fields["core"]
            return cls.make(fields["left"], "" if core == "-" else core, fields["right"], int(fields["offset"]))
        except (KeyError, ValueError) as exc:
            raise InvalidInput(f"bad BiSeq encoding: {text!r}") from exc

    def __str__(self):
        return self.encode()


def _normalize(L: str, C: str, R: str, o: int) -> BiSeq:
    e = o + len(C)
    nl, nr = len(L), len(R)

    def sym(i):
        if i >= e:
            return R[(i - e) % nr]
        if i < o:
            return L[(i - o) % nl]
        return C[i - o]

    # A: how far right the left periodic pattern persists
    limit = e + nl + nr
    A = o
    while A < limit and sym(A) == L[(A - o) % nl]:
        A += 1
    if A >= limit:
        # both tails are the same periodic sequence
        w = "".join(sym(i) for i in range(nr))
        return BiSeq(w, "", w, 0) if nl == nr else _fail(L, C, R, o)
    # B: how far left the right periodic pattern persists
    lower = o - nl - nr
    B = e
    while B > lower and sym(B - 1) == R[(B - 1 - e) % nr]:
        B -= 1
    if A <= B:
        core = "".join(sym(i) for i in range(A, B))
        start = A
    else:
        core = ""
        start = B
    newL = "".join(sym(start - nl + i) for i in range(nl))
    newR = "".join(sym(start + len(core) + i) for i in range(nr))
    return BiSeq(newL, core, newR, start)


def _fail(*args):  # pragma: no cover - Fine-Wilf makes this unreachable
    raise AssertionError(f"inconsistent normalization {args}")


def shift(s: BiSeq, n: int = 1) -> BiSeq:
    """``shift(s, n)[k] == s[k + n]``."""
    if n == 0:
        return s
    if s.is_periodic:
        return BiSeq.periodic(s.right, n)
    return BiSeq.make(s.left, s.core, s.right, s.offset - n)


def agreement_radius(s1: BiSeq, s2: BiSeq) -> int | None:
    """Minimal k >= 0 with a disagreement at position -k-1 or k.

    ``None`` when the sequences are equal.
    """
    if s1 == s2:
        return None
    H = (max(abs(s1.offset), abs(s1.end), abs(s2.offset), abs(s2.end))
         + len(s1.left) + len(s1.right) + len(s2.left) + len(s2.right) + 1)
    a = np.stack([s1.symbols(-H, H), s2.symbols(-H, H)])
    diff = a[0] != a[1]
    # position p sits at index p + H; disagreement at p gives radius
    # p for p >= 0 and -p-1 for p < 0
    pos = np.nonzero(diff)[0] - H
    assert pos.size, "distinct normalized sequences must differ inside the horizon"
    radii = np.where(pos >= 0, pos, -pos - 1)
    return int(radii.min())


def metric(s1: BiSeq, s2: BiSeq) -> float:
    k = agreement_radius(s1, s2)
    return 0.0 if k is None else 2.0 ** -k


@dataclass(frozen=True)
class Cylinder:
    word: str
    anchor: int

    def __post_init__(self):
        check_word(self.word)

    def __contains__(self, s: BiSeq) -> bool:
        return in_cylinder(s, self)


def in_cylinder(s: BiSeq, c: Cylinder) -> bool:
    return s.word(c.anchor, c.anchor + len(c.word)) == c.word


def enters_cylinder_nbhd(s: BiSeq, period_word: str) -> bool:
    """True iff some rotation of ``period_word`` repeated four times occurs
    as a factor of ``s``, i.e. the shift orbit of ``s`` meets the union of
    the cylinder neighborhoods built from the cyclic shifts of the word."""
    check_word(period_word)
    n = 4 * len(period_word)
    targets = {r * 4 for r in rotations(period_word)}
    lo = s.offset - n - len(s.left)
    hi = s.end + len(s.right) + n
    text = s.word(lo, hi + n)
    return any(t in text for t in targets)


def lemma5_check(alpha1: str, alpha2: str, omega3: str, m: int, T: int, targets) -> list[bool]:
    """Build ``beta = periodic(alpha1 + omega3*m + alpha2)`` and report, per
    target period word, whether its orbit enters the target's cylinder
    neighborhood. Under the preconditions every entry is ``False``."""
    for w in (alpha1, alpha2, omega3):
        check_word(w)
    if m <= 4 * T:
        raise InvalidInput(f"need m > 4T, got m={m}, T={T}")
    for a in (alpha1, alpha2):
        if len(a) <= 4 * T:
            raise InvalidInput(f"padding word shorter than 4T+1: {len(a)}")
        if not zero_run_constraint(a, T):
            raise InvalidInput(f"padding word has a zero run shorter than T={T}")
    beta = BiSeq.periodic(alpha1 + omega3 * m + alpha2)
    return [enters_cylinder_nbhd(beta, t) for t in targets]


def random_biseq(rng: np.random.Generator, max_period=4, max_core=8, max_offset=10) -> BiSeq:
    def word(lo, hi):
        n = int(rng.integers(lo, hi + 1))
        return "".join(map(str, rng.integers(0, 2, n)))

    return BiSeq.make(word(1, max_period), word(0, max_core), word(1, max_period),
                      int(rng.integers(-max_offset, max_offset + 1)))
