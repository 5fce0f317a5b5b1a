"""Closed-form algebra for signed Borel measures on the half line.

A measure is a finite list of atoms ``w * delta_tau`` (tau > 0) plus a list of
pairwise-disjoint density pieces.  Each piece lives on ``[a, b)`` and its density
is an exp-polynomial written in the local variable ``x = s - a``::

    k(s) = sum_j  p_j(x) * exp(-beta_j * x)

Pure polynomials (``beta = 0``) and pure exponentials are special cases.  The
class is closed under addition, scaling, total variation and the tail operator
``T(mu)(B) = int_B mu([s, inf)) ds``, and every mass, tail and exponential
moment has a closed form (incomplete gamma functions for the exponential terms).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import special

from .errors import (
    DegreeOverflow,
    DivergentMoment,
    InvalidMeasure,
    NoFiniteMoment,
    NotStrictlyDominated,
    SignChangeError,
    UnboundedSupport,
)

MAX_DEGREE = 16
DEFAULT_TOL = 1e-10
INF = math.inf

Term = tuple[float, tuple[float, ...]]


# ---------------------------------------------------------------------------
# polynomial helpers (ascending coefficients)


def _trim(c: Sequence[float]) -> tuple[float, ...]:
    c = list(c)
    while len(c) > 1 and c[-1] == 0.0:
        c.pop()
    return tuple(float(v) for v in c) if c else (0.0,)


def _shift(c: Sequence[float], d: float) -> tuple[float, ...]:
    """Coefficients of q(x) = p(x + d)."""
    if d == 0.0:
        return tuple(c)
    n = len(c)
    out = [0.0] * n
    for k, ck in enumerate(c):
        if ck == 0.0:
            continue
        for j in range(k + 1):
            out[j] += ck * math.comb(k, j) * d ** (k - j)
    return tuple(out)


def _add_poly(p: Sequence[float], q: Sequence[float]) -> tuple[float, ...]:
    n = max(len(p), len(q))
    return tuple((p[i] if i < len(p) else 0.0) + (q[i] if i < len(q) else 0.0) for i in range(n))


def _polyval(c: Sequence[float], x):
    return np.polynomial.polynomial.polyval(x, np.asarray(c, dtype=float))


def _mono_integral(k: int, rate: float, x1, x2):
    """int_{x1}^{x2} x**k exp(-rate * x) dx for 0 <= x1 <= x2 (x2 may be inf)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if rate == 0.0:
        if np.any(np.isinf(x2)):
            raise DivergentMoment("polynomial density on an infinite interval")
        return (x2 ** (k + 1) - x1 ** (k + 1)) / (k + 1)
    finite_top = np.where(np.isinf(x2), 0.0, x2)
    if np.all(np.isfinite(x2)) and abs(rate) * float(np.max(finite_top, initial=0.0)) < 1e-6:
        # short-interval series, avoids rate**-(k+1) overflow
        def f(x):
            return (
                x ** (k + 1) / (k + 1)
                - rate * x ** (k + 2) / (k + 2)
                + rate**2 * x ** (k + 3) / (2 * (k + 3))
            )

        return f(x2) - f(x1)
    if rate > 0.0:
        scale = math.gamma(k + 1) / rate ** (k + 1)
        z1, z2 = rate * x1, rate * x2
        p1, p2 = special.gammainc(k + 1, z1), special.gammainc(k + 1, z2)
        q1, q2 = special.gammaincc(k + 1, z1), special.gammaincc(k + 1, z2)
        return scale * np.where(p1 > 0.5, q1 - q2, p2 - p1)
    # growing exponential: finite intervals only
    if np.any(np.isinf(x2)):
        raise DivergentMoment("exponential moment diverges on an infinite piece")

    def g(x):
        return x ** (k + 1) / (k + 1) * special.hyp1f1(k + 1, k + 2, -rate * x)

    return g(x2) - g(x1)


def _term_integral(beta: float, coeffs: Sequence[float], x1, x2):
    total = 0.0
    for k, ck in enumerate(coeffs):
        if ck != 0.0:
            total = total + ck * _mono_integral(k, beta, x1, x2)
    return total


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DensityPiece:
    """A sign-definite exp-polynomial density on ``[a, b)``.

    ``terms`` holds ``(beta, coeffs)`` pairs; ``coeffs`` are ascending
    polynomial coefficients in the local variable ``x = s - a``.
    """

    a: float
    b: float
    terms: tuple[Term, ...]
    sign: int | None = field(default=None, compare=False)

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if not (0.0 <= a < b) or math.isnan(b):
            raise InvalidMeasure(f"piece interval [{a}, {b}) is not valid")
        merged: dict[float, tuple[float, ...]] = {}
        for beta, coeffs in self.terms:
            beta = float(beta)
            merged[beta] = _add_poly(merged.get(beta, (0.0,)), tuple(float(c) for c in coeffs))
        terms = tuple(sorted((beta, _trim(c)) for beta, c in merged.items() if any(v != 0.0 for v in c)))
        if not terms:
            terms = ((0.0, (0.0,)),) if math.isfinite(b) else ((1.0, (0.0,)),)
        for beta, coeffs in terms:
            if not all(math.isfinite(c) for c in coeffs):
                raise InvalidMeasure("non-finite density coefficient")
            if math.isinf(b) and beta <= 0.0 and any(c != 0.0 for c in coeffs):
                raise InvalidMeasure("an infinite interval needs a decaying exponential density")
        object.__setattr__(self, "terms", terms)
        if self.sign is None:
            object.__setattr__(self, "sign", self._infer_sign())

    # -- constructors -------------------------------------------------------
    @classmethod
    def poly(cls, a: float, b: float, coeffs: Sequence[float]) -> "DensityPiece":
        """Polynomial density sum_k coeffs[k] * s**k on [a, b) (global variable s)."""
        if len(coeffs) - 1 > MAX_DEGREE:
            raise DegreeOverflow(f"degree {len(coeffs) - 1} exceeds {MAX_DEGREE}")
        if math.isinf(b):
            raise InvalidMeasure("polynomial pieces need a finite right end")
        return cls(a, b, ((0.0, _shift(tuple(float(c) for c in coeffs), float(a))),))

    @classmethod
    def exponential(cls, a: float, b: float, c: float, beta: float) -> "DensityPiece":
        """Density c * exp(-beta * s) on [a, b) (global variable s)."""
        if beta <= 0.0:
            raise InvalidMeasure("exponential pieces need beta > 0")
        return cls(a, b, ((float(beta), (c * math.exp(-beta * a),)),))

    # -- basic properties ---------------------------------------------------
    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def degree(self) -> int:
        return max(len(c) - 1 for _, c in self.terms)

    @property
    def is_zero(self) -> bool:
        return all(all(v == 0.0 for v in c) for _, c in self.terms)

    def _local(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for beta, coeffs in self.terms:
            val = _polyval(coeffs, x)
            out = out + (val * np.exp(-beta * x) if beta != 0.0 else val)
        return out

    def density(self, s):
        s = np.asarray(s, dtype=float)
        inside = (s >= self.a) & (s < self.b)
        x = np.where(inside, s - self.a, 0.0)
        return np.where(inside, self._local(x), 0.0)

    def _infer_sign(self) -> int:
        L = self.length
        if math.isinf(L):
            bmin = min(beta for beta, _ in self.terms)
            L_probe = 60.0 / bmin
        else:
            L_probe = L
        pts = list(np.linspace(0.0, L_probe, 257))
        if len(self.terms) == 1:
            # root isolation: evaluate between consecutive interior real roots
            coeffs = self.terms[0][1]
            if len(coeffs) > 1:
                roots = np.roots(coeffs[::-1])
                real = sorted(
                    r.real
                    for r in roots
                    if abs(r.imag) <= 1e-9 * (1.0 + abs(r.real)) and 0.0 < r.real < L_probe
                )
                edges = [0.0] + real + [L_probe]
                pts += [0.5 * (u + v) for u, v in zip(edges[:-1], edges[1:])]
        vals = self._local(np.array(pts))
        vmax = float(np.max(np.abs(vals)))
        if vmax == 0.0:
            return 0
        tol = 1e-11 * vmax
        pos = bool(np.any(vals > tol))
        neg = bool(np.any(vals < -tol))
        if pos and neg:
            raise SignChangeError(f"density on [{self.a}, {self.b}) changes sign")
        return 1 if pos else -1

    # -- closed-form integrals ----------------------------------------------
    def mass(self, lo=0.0, hi=INF):
        """Mass of [lo, hi) intersected with the piece (vectorized in lo/hi)."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        x1 = np.clip(lo, self.a, self.b) - self.a
        x2 = np.clip(hi, self.a, self.b) - self.a
        x2 = np.maximum(x1, x2)
        total = np.zeros(np.broadcast(x1, x2).shape)
        for beta, coeffs in self.terms:
            total = total + _term_integral(beta, coeffs, x1, x2)
        return total if total.shape else float(total)

    def exp_moment(self, alpha: float) -> float:
        total = 0.0
        for beta, coeffs in self.terms:
            rate = beta - alpha
            if math.isinf(self.b) and rate <= 0.0:
                raise DivergentMoment(f"alpha={alpha} >= beta={beta} on an infinite piece")
            total += float(_term_integral(rate, coeffs, 0.0, self.length))
        return math.exp(alpha * self.a) * total

    def power_moment(self, n: int) -> float:
        """int s**n / n! k(s) ds, expanding (a + x)**n in the local variable."""
        shift_poly = [math.comb(n, j) * self.a ** (n - j) / math.factorial(n) for j in range(n + 1)]
        total = 0.0
        for beta, coeffs in self.terms:
            prod = np.polynomial.polynomial.polymul(coeffs, shift_poly)
            total += float(_term_integral(beta, prod, 0.0, self.length))
        return total

    # -- transformations ----------------------------------------------------
    def scaled(self, c: float) -> "DensityPiece":
        sign = None if self.sign is None else int(np.sign(c)) * self.sign
        return DensityPiece(self.a, self.b, tuple((beta, tuple(c * v for v in co)) for beta, co in self.terms), sign=sign)

    def restricted(self, lo: float, hi: float) -> "DensityPiece":
        """The same density on the sub-interval [lo, hi) of [a, b)."""
        if not (self.a <= lo < hi <= self.b):
            raise InvalidMeasure("restriction outside the piece")
        d = lo - self.a
        terms = tuple(
            (beta, tuple(v * math.exp(-beta * d) for v in _shift(co, d))) for beta, co in self.terms
        )
        return DensityPiece(lo, hi, terms, sign=self.sign)

    def partial_tail_terms(self) -> tuple[Term, ...]:
        """Local terms of x -> int_{a+x}^{b} k(s) ds for 0 <= x < b - a."""
        L = self.length
        out: list[Term] = []
        const = 0.0
        for beta, co in self.terms:
            if beta == 0.0:
                anti = [0.0] + [v / (k + 1) for k, v in enumerate(co)]
                const += float(_polyval(anti, L))
                out.append((0.0, tuple(-v for v in anti)))
            else:
                deg = len(co) - 1
                q = [0.0] * (deg + 1)
                for k, ck in enumerate(co):
                    if ck == 0.0:
                        continue
                    for j in range(k + 1):
                        q[j] += ck * math.factorial(k) / (math.factorial(j) * beta ** (k - j + 1))
                out.append((beta, tuple(q)))
                if math.isfinite(L):
                    const -= math.exp(-beta * L) * float(_polyval(q, L))
        out.append((0.0, (const,)))
        return tuple(out)

    # -- serialization ------------------------------------------------------
    def to_json(self) -> dict:
        b = "inf" if math.isinf(self.b) else self.b
        if len(self.terms) == 1:
            beta, co = self.terms[0]
            if beta == 0.0:
                return {"a": self.a, "b": b, "kind": "poly", "coeffs": list(_shift(co, -self.a))}
            if len(co) == 1:
                return {"a": self.a, "b": b, "kind": "exp", "c": co[0] * math.exp(beta * self.a), "beta": beta}
        return {
            "a": self.a,
            "b": b,
            "kind": "exppoly",
            "terms": [{"beta": beta, "coeffs": list(co)} for beta, co in self.terms],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DensityPiece":
        a = float(obj["a"])
        b = INF if obj["b"] in ("inf", None) else float(obj["b"])
        kind = obj.get("kind", "poly")
        if kind == "poly":
            return cls.poly(a, b, obj["coeffs"])
        if kind == "exp":
            return cls.exponential(a, b, float(obj["c"]), float(obj["beta"]))
        if kind == "exppoly":
            return cls(a, b, tuple((float(t["beta"]), tuple(t["coeffs"])) for t in obj["terms"]))
        raise InvalidMeasure(f"unknown piece kind {kind!r}")


def _merge_terms(*groups: Iterable[Term]) -> tuple[Term, ...]:
    out: list[Term] = []
    for g in groups:
        out.extend(g)
    return tuple(out)


@dataclass(frozen=True)
class MeasureRepr:
    """Signed measure = atoms + disjoint density pieces.  Immutable."""

    atoms: tuple[tuple[float, float], ...] = ()
    pieces: tuple[DensityPiece, ...] = ()

    def __post_init__(self):
        atoms = tuple((float(t), float(w)) for t, w in self.atoms)
        for i, (t, w) in enumerate(atoms):
            if not t > 0.0 or not math.isfinite(t):
                raise InvalidMeasure(f"atom location {t} must be finite and > 0")
            if w == 0.0 or not math.isfinite(w):
                raise InvalidMeasure(f"atom weight at {t} must be finite and nonzero")
            if i and atoms[i - 1][0] >= t:
                raise InvalidMeasure("atom locations must be strictly increasing")
        object.__setattr__(self, "atoms", atoms)
        pieces = tuple(self.pieces)
        for i, p in enumerate(pieces):
            if i and pieces[i - 1].b > p.a:
                raise InvalidMeasure("density pieces must be ordered and disjoint")
            if math.isinf(p.b) and i != len(pieces) - 1:
                raise InvalidMeasure("only the last piece may be infinite")
        object.__setattr__(self, "pieces", pieces)

    # -- constructors -------------------------------------------------------
    @classmethod
    def build(cls, atoms: Iterable[tuple[float, float]] = (), pieces: Iterable[DensityPiece] = ()) -> "MeasureRepr":
        """Normalizing constructor: merges coincident atoms, drops zero weights, sorts."""
        acc: dict[float, float] = {}
        for t, w in atoms:
            acc[float(t)] = acc.get(float(t), 0.0) + float(w)
        at = tuple(sorted((t, w) for t, w in acc.items() if w != 0.0))
        pc = tuple(sorted((p for p in pieces if not p.is_zero), key=lambda p: p.a))
        return cls(at, pc)

    @classmethod
    def zero(cls) -> "MeasureRepr":
        return cls()

    @classmethod
    def dirac(cls, tau: float, weight: float = 1.0) -> "MeasureRepr":
        return cls(((tau, weight),))

    # -- queries ------------------------------------------------------------
    @property
    def is_zero(self) -> bool:
        return not self.atoms and not self.pieces

    @property
    def support_end(self) -> float:
        end = 0.0
        if self.atoms:
            end = self.atoms[-1][0]
        if self.pieces:
            end = max(end, self.pieces[-1].b)
        return end

    @property
    def breakpoints(self) -> list[float]:
        pts = {t for t, _ in self.atoms}
        for p in self.pieces:
            pts.add(p.a)
            if math.isfinite(p.b):
                pts.add(p.b)
        return sorted(pts)

    @property
    def is_nonnegative(self) -> bool:
        return all(w > 0 for _, w in self.atoms) and all(p.sign >= 0 for p in self.pieces)

    @property
    def max_degree(self) -> int:
        return max((p.degree for p in self.pieces), default=0)

    def mass(self, a: float = 0.0, b: float = INF) -> float:
        """mu([a, b)): atom at a included, atom at b excluded."""
        total = sum(w for t, w in self.atoms if a <= t < b)
        for p in self.pieces:
            if p.b > a and p.a < b:
                total += float(p.mass(a, b))
        return total

    @property
    def total_mass(self) -> float:
        return self.mass(0.0, INF)

    def tail(self, s: float) -> float:
        """mu([s, inf))."""
        return self.mass(s, INF)

    def tail_open(self, s: float) -> float:
        """mu((s, inf))."""
        return self.tail(s) - sum(w for t, w in self.atoms if t == s)

    def tail_array(self, s) -> np.ndarray:
        """Vectorized mu([s, inf))."""
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        if self.atoms:
            taus = np.array([t for t, _ in self.atoms])
            cum = np.concatenate([np.cumsum(np.array([w for _, w in self.atoms])[::-1])[::-1], [0.0]])
            out = out + cum[np.searchsorted(taus, s, side="left")]
        for p in self.pieces:
            out = out + p.mass(s, INF)
        return out

    def density(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        for p in self.pieces:
            out = out + p.density(s)
        return out

    # -- algebra ------------------------------------------------------------
    def scaled(self, c: float) -> "MeasureRepr":
        if c == 0.0:
            return MeasureRepr()
        # products can underflow to zero; drop those atoms rather than store them
        return MeasureRepr(
            tuple((t, c * w) for t, w in self.atoms if c * w != 0.0), tuple(p.scaled(c) for p in self.pieces)
        )

    def __mul__(self, c: float) -> "MeasureRepr":
        return self.scaled(float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "MeasureRepr":
        return self.scaled(-1.0)

    def __add__(self, other: "MeasureRepr") -> "MeasureRepr":
        if not isinstance(other, MeasureRepr):
            return NotImplemented
        atoms = list(self.atoms) + list(other.atoms)
        pts = set()
        for p in self.pieces + other.pieces:
            pts.add(p.a)
            pts.add(p.b)
        edges = sorted(pts)
        pieces = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            parts = [p.restricted(lo, hi) for p in self.pieces + other.pieces if p.a <= lo and hi <= p.b]
            if not parts:
                continue
            signs = {p.sign for p in parts if p.sign}
            sign = signs.pop() if len(signs) == 1 else None
            pieces.append(DensityPiece(lo, hi, _merge_terms(*(p.terms for p in parts)), sign=sign))
        return MeasureRepr.build(atoms, pieces)

    # -- serialization ------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "atoms": [{"tau": t, "weight": w} for t, w in self.atoms],
            "pieces": [p.to_json() for p in self.pieces],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MeasureRepr":
        if not isinstance(obj, dict):
            raise InvalidMeasure("measure must be a JSON object")
        # a zero weight is the zero measure, which sweeps over the weight legitimately reach
        atoms = [(float(a["tau"]), float(a["weight"])) for a in obj.get("atoms", []) if float(a["weight"]) != 0.0]
        pieces = [DensityPiece.from_json(p) for p in obj.get("pieces", [])]
        return cls(tuple(atoms), tuple(sorted(pieces, key=lambda p: p.a)))


# ---------------------------------------------------------------------------
# operations


def total_variation(mu: MeasureRepr) -> MeasureRepr:
    """|mu|: absolute atom weights and sign-flipped negative pieces."""
    return MeasureRepr(
        tuple((t, abs(w)) for t, w in mu.atoms),
        tuple(p.scaled(-1.0) if p.sign < 0 else p for p in mu.pieces),
    )


def tail(mu: MeasureRepr, s: float) -> float:
    if s < 0:
        raise ValueError("tail requires s >= 0")
    return mu.tail(s)


def exp_moment(mu: MeasureRepr, alpha: float) -> float:
    """int exp(alpha * s) dmu(s) in closed form."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    total = sum(w * math.exp(alpha * t) for t, w in mu.atoms)
    for p in mu.pieces:
        total += p.exp_moment(alpha)
    return total


def power_moment(mu: MeasureRepr, n: int) -> float:
    """int s**n / n! dmu(s) in closed form."""
    total = sum(w * t**n / math.factorial(n) for t, w in mu.atoms)
    return total + sum(p.power_moment(n) for p in mu.pieces)


def alpha_cap(mu: MeasureRepr) -> float:
    caps = [0.999 * min(beta for beta, _ in p.terms) for p in mu.pieces if math.isinf(p.b)]
    return min(caps) if caps else 1e3


def find_alpha(mu: MeasureRepr, mu0: float) -> float:
    """Half of the largest rate alpha with int exp(alpha s) d|mu| <= mu0.

    Bisects the increasing map ``alpha -> exp_moment(|mu|, alpha) - mu0`` on
    ``(0, alpha_cap]`` to relative width 1e-9.
    """
    if not mu0 > 0:
        raise NotStrictlyDominated("mu0 must be positive")
    nu = total_variation(mu)
    if nu.total_mass >= mu0:
        raise NotStrictlyDominated(f"|mu|(R+) = {nu.total_mass} >= mu0 = {mu0}")
    cap = alpha_cap(nu)
    if not cap > 0:
        raise NoFiniteMoment("no positive rate has a finite exponential moment")

    def moment(a: float) -> float:
        try:
            return exp_moment(nu, a)
        except OverflowError:
            return INF

    if moment(cap) < mu0:
        root = cap
    else:
        lo, hi = 0.0, cap
        while hi - lo > 1e-9 * hi:
            mid = 0.5 * (lo + hi)
            if moment(mid) < mu0:
                lo = mid
            else:
                hi = mid
        root = lo
    return 0.5 * root


def apply_T(mu: MeasureRepr, max_degree: int | None = MAX_DEGREE) -> MeasureRepr:
    """Absolutely continuous measure whose density is s -> mu([s, inf))."""
    if mu.is_zero:
        return MeasureRepr()
    if not mu.is_nonnegative:
        raise InvalidMeasure("T is only applied to nonnegative measures")
    edges = sorted({0.0, *mu.breakpoints})
    infinite = mu.pieces[-1] if mu.pieces and math.isinf(mu.pieces[-1].b) else None
    pieces = []
    segments = list(zip(edges[:-1], edges[1:]))
    if infinite is not None:
        segments.append((edges[-1], INF))
    for lo, hi in segments:
        const = mu.tail(hi) if math.isfinite(hi) else 0.0
        terms: list[Term] = [(0.0, (const,))]
        for p in mu.pieces:
            if p.a <= lo and hi <= p.b:
                terms.extend(p.restricted(lo, hi).partial_tail_terms())
        piece = DensityPiece(lo, hi, tuple(terms), sign=1)
        if piece.is_zero:
            continue
        if max_degree is not None and piece.degree > max_degree:
            raise DegreeOverflow(f"T would produce degree {piece.degree} > {max_degree}")
        pieces.append(piece)
    return MeasureRepr((), tuple(pieces))


# ---------------------------------------------------------------------------
# dominating measure certificates


@dataclass(frozen=True)
class DecayCertificate:
    alpha: float
    mu0: float
    mu_tot: float
    lam: MeasureRepr
    order: int
    tail_bound: float
    builder: str = "series"

    @property
    def lambda_mass(self) -> float:
        return self.lam.total_mass

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "mu0": self.mu0,
            "mu_tot": self.mu_tot,
            "lambda_mass": self.lambda_mass,
            "order": self.order,
            "tail_bound": self.tail_bound,
            "builder": self.builder,
            "lambda": self.lam.to_json(),
        }


def build_lambda(
    mu: MeasureRepr, mu0: float, alpha: float, tol: float = DEFAULT_TOL, max_order: int = 400
) -> DecayCertificate:
    """Truncated series lambda_N = sum_{n<=N} alpha**n T**n(|mu|).

    N is the first order whose remainder ``exp_moment(|mu|, alpha) - lambda_N(R+)``
    is at most ``tol``.  Falls back to :func:`build_lambda_compact` when the
    polynomial degree would overflow and the support is bounded.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    nu = total_variation(mu)
    mu_tot = exp_moment(nu, alpha)
    if not mu_tot < mu0:
        raise NotStrictlyDominated(f"int exp(alpha s) d|mu| = {mu_tot} >= mu0 = {mu0}")
    lam = nu
    term = nu
    partial = nu.total_mass
    n = 0
    while True:
        remainder = max(mu_tot - partial, 0.0)
        if remainder <= tol or term.is_zero:
            break
        if n >= max_order:
            raise DegreeOverflow(f"series did not reach tol={tol} within {max_order} terms")
        try:
            term = apply_T(term).scaled(alpha)
        except DegreeOverflow:
            if math.isfinite(nu.support_end):
                return build_lambda_compact(mu, mu0)
            raise
        n += 1
        lam = lam + term
        partial += term.total_mass
    if term.is_zero:
        remainder = 0.0
    return DecayCertificate(alpha, mu0, mu_tot, lam, n, remainder, "series")


def dyadic_intervals(horizon: float, level: int) -> list[tuple[float, float]]:
    """[k h, (k+1) h) for k < 2**level with h = horizon / 2**level."""
    n = 2**level
    h = horizon / n
    return [(k * h, (k + 1) * h) for k in range(n)]


def build_lambda_compact(mu: MeasureRepr, mu0: float, tau: float | None = None, level: int = 8) -> DecayCertificate:
    """lambda = |mu| + c chi_[0, tau] ds with c = (mu0 - |mu|(R+)) / (2 tau).

    The rate is the largest alpha for which ``T(lambda) <= lambda / alpha`` holds
    on the dyadic family of level ``level`` over [0, tau], capped by the bound
    ``c / lambda(R+)`` that holds for every Borel set, and then halved until the
    exponential moment of |mu| stays below mu0.
    """
    nu = total_variation(mu)
    if nu.pieces and math.isinf(nu.pieces[-1].b):
        raise UnboundedSupport("compact construction needs bounded support")
    if tau is None:
        tau = nu.support_end
    if not tau > 0:
        raise UnboundedSupport("support length tau must be positive")
    if nu.support_end > tau:
        raise UnboundedSupport(f"|mu| is not supported in [0, {tau}]")
    if not nu.total_mass < mu0:
        raise NotStrictlyDominated(f"|mu|(R+) = {nu.total_mass} >= mu0 = {mu0}")
    c = (mu0 - nu.total_mass) / (2.0 * tau)
    lam = nu + MeasureRepr((), (DensityPiece(0.0, tau, ((0.0, (c,)),), sign=1),))
    lam_mass = lam.total_mass
    tl = apply_T(lam, max_degree=None)
    ratios = [
        lam.mass(a, b) / tb
        for a, b in dyadic_intervals(tau, level)
        if (tb := tl.mass(a, b)) > 0.0
    ]
    alpha = min([c / lam_mass] + ratios)
    mu_tot = exp_moment(nu, alpha)
    while mu_tot >= mu0:
        alpha *= 0.5
        mu_tot = exp_moment(nu, alpha)
    return DecayCertificate(alpha, mu0, mu_tot, lam, 0, 0.0, "compact")


@dataclass
class VerificationReport:
    passed: bool
    domination_slack: float
    integration_slack: float
    global_slack: float
    violations: list[tuple[str, float, float, float]]

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "domination_slack": self.domination_slack,
            "integration_slack": self.integration_slack,
            "global_slack": self.global_slack,
            "violations": [list(v) for v in self.violations],
        }


def verify_certificate(
    cert: DecayCertificate, mu: MeasureRepr, intervals: Sequence[tuple[float, float]]
) -> VerificationReport:
    """Check |mu|(I) <= lambda(I) and T(lambda)(I) <= lambda(I)/alpha on each interval.

    The truncation remainder enters the second inequality as ``tail_bound / alpha``,
    which bounds the mass the truncated series leaves out of ``T(lambda_N)``.
    """
    if not intervals:
        raise ValueError("at least one interval is required")
    nu = total_variation(mu)
    lam = cert.lam
    scale = max(1.0, lam.total_mass)
    atol = 1e-12 * scale
    tl = apply_T(lam, max_degree=None)
    dom_worst = math.inf
    int_worst = math.inf
    violations = []
    for a, b in intervals:
        lam_i = lam.mass(a, b)
        d = lam_i + atol - nu.mass(a, b)
        i = lam_i / cert.alpha + cert.tail_bound / cert.alpha + atol - tl.mass(a, b)
        dom_worst = min(dom_worst, d - atol)
        int_worst = min(int_worst, i - atol)
        if d < 0:
            violations.append(("domination", a, b, d - atol))
        if i < 0:
            violations.append(("integration", a, b, i - atol))
    glob = cert.mu0 - lam.total_mass
    if not glob > 0:
        violations.append(("total_mass", 0.0, INF, glob))
    return VerificationReport(not violations, dom_worst, int_worst, glob, violations)
