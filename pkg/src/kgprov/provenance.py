"""Provenance polynomials over edge-identifier symbols.

A polynomial is a sum of monomials with positive integer coefficients;
each monomial is a product of edge symbols with positive integer
exponents.  Addition models alternative derivations of an answer,
multiplication models joint use of edges within one derivation.
"""

from __future__ import annotations

import re
from functools import reduce

# A monomial is a tuple of (edge_id, exponent) pairs sorted by edge_id.
Monomial = tuple[tuple[int, int], ...]

MONO_ONE: Monomial = ()

_FACTOR_RE = re.compile(r"^e(\d+)(?:\^(\d+))?$")


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    """Multiply two monomials (exponents add)."""
    if not a:
        return b
    if not b:
        return a
    factors: dict[int, int] = dict(a)
    for eid, exp in b:
        factors[eid] = factors.get(eid, 0) + exp
    return tuple(sorted(factors.items()))


def mono_degree(m: Monomial, edge_id: int) -> int:
    for eid, exp in m:
        if eid == edge_id:
            return exp
    return 0


def mono_edges(m: Monomial) -> frozenset[int]:
    return frozenset(eid for eid, _ in m)


class Polynomial:
    """Immutable, canonical provenance polynomial.

    Internally a sorted tuple of (monomial, coefficient) pairs; the empty
    tuple is the additive identity 0 and the single empty monomial is the
    multiplicative identity 1.
    """

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: dict[Monomial, int] | None = None):
        if terms:
            self.terms: tuple[tuple[Monomial, int], ...] = tuple(
                sorted((m, c) for m, c in terms.items() if c != 0)
            )
        else:
            self.terms = ()
        self._hash = hash(self.terms)

    # --- constructors ---

    @classmethod
    def zero(cls) -> Polynomial:
        return _ZERO

    @classmethod
    def one(cls) -> Polynomial:
        return _ONE

    @classmethod
    def edge(cls, edge_id: int) -> Polynomial:
        return cls({((edge_id, 1),): 1})

    @classmethod
    def monomial(cls, m: Monomial, coeff: int = 1) -> Polynomial:
        return cls({m: coeff})

    # --- semiring operations ---

    def __add__(self, other: Polynomial) -> Polynomial:
        if not self.terms:
            return other
        if not other.terms:
            return self
        acc = dict(self.terms)
        for m, c in other.terms:
            acc[m] = acc.get(m, 0) + c
        return Polynomial(acc)

    def __mul__(self, other: Polynomial) -> Polynomial:
        if not self.terms or not other.terms:
            return _ZERO
        acc: dict[Monomial, int] = {}
        for m1, c1 in self.terms:
            for m2, c2 in other.terms:
                m = mono_mul(m1, m2)
                acc[m] = acc.get(m, 0) + c1 * c2
        return Polynomial(acc)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self.terms == other.terms

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Polynomial({self.to_text()!r})"

    # --- deletion support ---

    def survives_deletion(self, deleted: int) -> bool:
        """Evaluate with `deleted` set to 0 and every other symbol to 1.

        True iff at least one monomial does not contain the deleted edge.
        """
        return any(mono_degree(m, deleted) == 0 for m, _ in self.terms)

    def prune(self, deleted: int) -> Polynomial:
        """Drop every monomial that contains the deleted edge."""
        if all(mono_degree(m, deleted) == 0 for m, _ in self.terms):
            return self
        return Polynomial(
            {m: c for m, c in self.terms if mono_degree(m, deleted) == 0}
        )

    # --- projections ---

    def edges(self) -> frozenset[int]:
        """All edge symbols occurring in the polynomial."""
        return frozenset(eid for m, _ in self.terms for eid, _ in m)

    def why(self) -> frozenset[frozenset[int]]:
        """Why-provenance: the set of witness edge-sets."""
        return frozenset(mono_edges(m) for m, _ in self.terms)

    def idempotent(self) -> Polynomial:
        """Collapse to B[X]: coefficients and exponents forced to 1."""
        acc: dict[Monomial, int] = {}
        for m, _ in self.terms:
            acc[tuple((eid, 1) for eid, _ in m)] = 1
        return Polynomial(acc)

    # --- text form ---

    def to_text(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for m, c in self.terms:
            factors = [
                f"e{eid}" if exp == 1 else f"e{eid}^{exp}" for eid, exp in m
            ]
            if c != 1:
                factors.insert(0, str(c))
            parts.append("*".join(factors) if factors else "1")
        return " + ".join(parts)

    @classmethod
    def parse(cls, text: str) -> Polynomial:
        text = text.strip()
        if text == "0":
            return _ZERO
        acc: dict[Monomial, int] = {}
        for part in text.split("+"):
            coeff = 1
            factors: dict[int, int] = {}
            tokens = [t.strip() for t in part.strip().split("*")]
            for tok in tokens:
                if tok.isdigit():
                    coeff *= int(tok)
                    continue
                m = _FACTOR_RE.match(tok)
                if not m:
                    raise ValueError(f"bad polynomial factor: {tok!r}")
                eid = int(m.group(1))
                exp = int(m.group(2) or 1)
                factors[eid] = factors.get(eid, 0) + exp
            mono = tuple(sorted(factors.items()))
            acc[mono] = acc.get(mono, 0) + coeff
        return cls(acc)


_ZERO = Polynomial()
_ONE = Polynomial({MONO_ONE: 1})


def poly_add(*polys: Polynomial) -> Polynomial:
    return reduce(lambda a, b: a + b, polys, _ZERO)


def poly_mul(*polys: Polynomial) -> Polynomial:
    return reduce(lambda a, b: a * b, polys, _ONE)
