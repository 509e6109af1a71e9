"""Slow independent oracles used to certify the fast implementations."""

from __future__ import annotations

import numpy as np

from xhsp.xgroup import FactorType, GroupElement, GroupSpec, Subgroup, multiply


def _letters(spec: GroupSpec, g: GroupElement) -> tuple[list[tuple[str, int]], int]:
    """Unit-letter word (x/y letters only) plus a separate z exponent."""
    word: list[tuple[str, int]] = []
    for i in range(spec.k):
        word += [("x", i)] * g.coords[2 * i]
        word += [("y", i)] * g.coords[2 * i + 1]
    return word, g.coords[-1]


def _normal_form(spec: GroupSpec, word: list[tuple[str, int]], z_exp: int) -> GroupElement:
    """Sort the word into generator order using only the defining relations.

    Distinct factors commute; z is central; moving x_i left past y_i costs
    one inverse z (from y x = x y z^-1).  Exponent overflow then reduces by
    the per-factor power relations.
    """
    p = int(spec.p)
    key = {"x": 0, "y": 1}
    w = list(word)
    for idx in range(1, len(w)):
        cur = w[idx]
        m = idx
        while m > 0 and (w[m - 1][1], key[w[m - 1][0]]) > (cur[1], key[cur[0]]):
            prev = w[m - 1]
            if prev[0] == "y" and cur[0] == "x" and prev[1] == cur[1]:
                z_exp -= 1
            w[m] = prev
            m -= 1
        w[m] = cur
    coords = []
    for i in range(spec.k):
        cx = sum(1 for s, f in w if s == "x" and f == i)
        cy = sum(1 for s, f in w if s == "y" and f == i)
        ft = spec.factors[i]
        if ft is FactorType.APSQUARED:
            z_exp += cx // p
        elif ft is FactorType.QUATERNION:
            z_exp += cx // 2 + cy // 2
        coords.append(cx % p)
        coords.append(cy % p)
    coords.append(z_exp % p)
    return GroupElement(tuple(coords))


def rewriting_multiply(spec: GroupSpec, g1: GroupElement, g2: GroupElement) -> GroupElement:
    """Product computed by word rewriting from the relations alone."""
    w1, z1 = _letters(spec, g1)
    w2, z2 = _letters(spec, g2)
    return _normal_form(spec, w1 + w2, z1 + z2)


def brute_coset_label(spec: GroupSpec, h: Subgroup, g: GroupElement) -> tuple[int, ...]:
    """Lexicographically least coordinate vector over the left coset gH."""
    return min(multiply(spec, g, member).coords for member in h.elements)


def witness_exists_bruteforce(u, p: int) -> bool:
    """Does any j in (Z_p^*)^4 solve both cancellation sums?  Meet in the middle."""
    u = [x % p for x in u]
    left = set()
    for j1 in range(1, p):
        for j2 in range(1, p):
            s1 = (u[0] * j1 + u[1] * j2) % p
            s2 = (u[0] * j1 * j1 + u[1] * j2 * j2) % p
            left.add((s1, s2))
    for j3 in range(1, p):
        for j4 in range(1, p):
            s1 = (-(u[2] * j3 + u[3] * j4)) % p
            s2 = (-(u[2] * j3 * j3 + u[3] * j4 * j4)) % p
            if (s1, s2) in left:
                return True
    return False


def brute_nullspace(rows, ncols: int, p: int) -> set[tuple[int, ...]]:
    """All v in Z_p^ncols with M v == 0, by full enumeration."""
    out = set()
    for flat in range(p**ncols):
        v = []
        rem = flat
        for _ in range(ncols):
            v.append(rem % p)
            rem //= p
        v = tuple(reversed(v))
        if all(sum(r[m] * v[m] for m in range(ncols)) % p == 0 for r in rows):
            out.add(v)
    return out


def span_of(vectors, p: int, n: int) -> set[tuple[int, ...]]:
    acc = {(0,) * n}
    frontier = [(0,) * n]
    while frontier:
        nxt = []
        for v in frontier:
            for r in vectors:
                w = tuple((a + int(b)) % p for a, b in zip(v, r))
                if w not in acc:
                    acc.add(w)
                    nxt.append(w)
        frontier = nxt
    return acc


def random_subgroup_of(spec: GroupSpec, rng: np.random.Generator, max_gens: int = 3) -> Subgroup:
    from xhsp.xgroup import random_element

    n = int(rng.integers(0, max_gens + 1))
    return Subgroup(spec, [random_element(spec, rng) for _ in range(n)])
