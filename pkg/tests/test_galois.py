"""Field arithmetic and decoding tests.

Expected values come from independent oracles: extended-Euclid inversion,
direct polynomial evaluation, and brute-force search over all low-degree
polynomials in a small field.
"""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from veilstore.galois import (
    DecodeFailure,
    PrimeField,
    WORD_FIELD,
    berlekamp_welch_decode,
    lagrange_eval_at_zero,
    lagrange_interpolate,
    normalize,
    poly_divmod,
    poly_eval,
    poly_mul,
    solve_linear,
)

GF7 = PrimeField(7)


def egcd_inverse(a: int, p: int) -> int:
    """Extended Euclid, independent of the pow-based implementation."""
    old_r, r = a % p, p
    old_s, s = 1, 0
    while r:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
    assert old_r == 1, "not invertible"
    return old_s % p


def brute_force_decode(points, t, e_max, field):
    """All degree <= t polynomials consistent with >= len(points) - e_max
    points; feasible only for tiny fields."""
    matches = []
    coeff_space = [[c] for c in range(field.p)]
    for _ in range(t):
        coeff_space = [prefix + [c] for prefix in coeff_space for c in range(field.p)]
    for coeffs in coeff_space:
        errors = {x for x, y in points if poly_eval(coeffs, x, field) != y}
        if len(errors) <= e_max:
            matches.append((normalize(coeffs, field), errors))
    return matches


def test_field_ops_small_examples():
    assert GF7.mul(3, 5) == 1
    assert GF7.inv(3) == 5
    assert WORD_FIELD.inv(2) == egcd_inverse(2, 65537)
    assert WORD_FIELD.inv(2) == 32769


def test_inverse_matches_euclid_oracle():
    rng = random.Random(7)
    for _ in range(200):
        a = rng.randrange(1, WORD_FIELD.p)
        assert WORD_FIELD.inv(a) == egcd_inverse(a, WORD_FIELD.p)


def test_inverse_of_zero_rejected():
    with pytest.raises(ZeroDivisionError):
        GF7.inv(0)
    with pytest.raises(ZeroDivisionError):
        GF7.inv(7)


def test_non_prime_modulus_rejected():
    with pytest.raises(ValueError):
        PrimeField(15)


@settings(deadline=None, max_examples=200)
@given(
    a=st.integers(0, WORD_FIELD.p - 1),
    b=st.integers(0, WORD_FIELD.p - 1),
    c=st.integers(0, WORD_FIELD.p - 1),
)
def test_field_laws(a, b, c):
    f = WORD_FIELD
    assert f.add(a, b) == f.add(b, a)
    assert f.mul(a, b) == f.mul(b, a)
    assert f.add(f.add(a, b), c) == f.add(a, f.add(b, c))
    assert f.mul(f.mul(a, b), c) == f.mul(a, f.mul(b, c))
    assert f.mul(a, f.add(b, c)) == f.add(f.mul(a, b), f.mul(a, c))
    assert f.add(a, f.neg(a)) == 0
    if a % f.p:
        assert f.mul(a, f.inv(a)) == 1


def test_lagrange_eval_at_zero_examples():
    # f(x) = 3 + 2x over GF(7) sampled at x = 1..4
    points = [(1, 5), (2, 0), (3, 2), (4, 4)]
    assert lagrange_eval_at_zero(points, GF7) == 3
    assert lagrange_eval_at_zero([(1, 4)], GF7) == 4


def test_lagrange_matches_direct_evaluation_oracle():
    rng = random.Random(3)
    for _ in range(50):
        coeffs = [rng.randrange(WORD_FIELD.p) for _ in range(4)]
        xs = rng.sample(range(1, 200), 4)
        points = [(x, poly_eval(coeffs, x, WORD_FIELD)) for x in xs]
        assert lagrange_eval_at_zero(points, WORD_FIELD) == coeffs[0] % WORD_FIELD.p
        assert lagrange_interpolate(points, WORD_FIELD) == normalize(coeffs, WORD_FIELD)


def test_duplicate_x_rejected():
    with pytest.raises(ValueError):
        lagrange_eval_at_zero([(1, 2), (1, 3)], GF7)
    with pytest.raises(ValueError):
        berlekamp_welch_decode([(1, 2), (1, 3), (2, 0), (3, 1)], 0, 1, GF7)


def test_poly_division_round_trip():
    rng = random.Random(11)
    for _ in range(40):
        a = [rng.randrange(GF7.p) for _ in range(rng.randrange(1, 5))]
        b = [rng.randrange(GF7.p) for _ in range(rng.randrange(1, 4))]
        if normalize(b, GF7) == [0]:
            continue
        product = poly_mul(a, b, GF7)
        quot, rem = poly_divmod(product, b, GF7)
        assert rem == [0]
        assert quot == normalize(a, GF7)


def test_solve_linear_inconsistent_returns_none():
    rows = [[1, 0], [1, 0]]
    assert solve_linear(rows, [1, 2], GF7) is None
    assert solve_linear(rows, [1, 1], GF7) is not None


def test_decode_worked_example_against_brute_force():
    # f(x) = 3 + 2x over GF(7); corrupt the share at x=2 from 0 to 6.
    points = [(1, 5), (2, 6), (3, 2), (4, 4)]
    oracle = brute_force_decode(points, t=1, e_max=1, field=GF7)
    assert ([3, 2], {2}) in oracle
    coeffs, errors = berlekamp_welch_decode(points, t=1, e_max=1, field=GF7)
    assert (coeffs, errors) in oracle
    assert coeffs == [3, 2]
    assert errors == {2}


def test_decode_clean_points_matches_lagrange():
    points = [(1, 5), (2, 0), (3, 2), (4, 4)]
    coeffs, errors = berlekamp_welch_decode(points, t=1, e_max=1, field=GF7)
    assert errors == set()
    assert poly_eval(coeffs, 0, GF7) == lagrange_eval_at_zero(points, GF7)


def test_decode_exhaustive_single_corruption_gf7():
    """Every single-position corruption of every degree-1 polynomial is
    corrected exactly (k = 4, t = 1, e_max = 1)."""
    xs = [1, 2, 3, 4]
    for a0 in range(7):
        for a1 in range(7):
            f = [a0, a1]
            clean = [(x, poly_eval(f, x, GF7)) for x in xs]
            for corrupt_at in range(4):
                for wrong in range(7):
                    if wrong == clean[corrupt_at][1]:
                        continue
                    noisy = list(clean)
                    noisy[corrupt_at] = (xs[corrupt_at], wrong)
                    coeffs, errors = berlekamp_welch_decode(noisy, 1, 1, GF7)
                    assert coeffs == normalize(f, GF7)
                    assert errors == {xs[corrupt_at]}


def test_decode_beyond_budget_fails_or_mismatches():
    """With e_max + 1 corruptions at minimum k, decoding either fails or
    returns a polynomial that disagrees with the original (caught downstream
    by the content digest check)."""
    rng = random.Random(5)
    outcomes = {"failure": 0, "wrong_poly": 0}
    for _ in range(300):
        f = [rng.randrange(7), rng.randrange(7)]
        xs = [1, 2, 3, 4]
        points = [(x, poly_eval(f, x, GF7)) for x in xs]
        bad = rng.sample(range(4), 2)
        for i in bad:
            x, y = points[i]
            points[i] = (x, (y + rng.randrange(1, 7)) % 7)
        try:
            coeffs, _ = berlekamp_welch_decode(points, 1, 1, GF7)
            assert coeffs != normalize(f, GF7) or all(
                poly_eval(coeffs, x, GF7) == y for x, y in points
            )
            outcomes["wrong_poly"] += 1
        except DecodeFailure:
            outcomes["failure"] += 1
    assert outcomes["failure"] > 0


def test_decode_round_trip_word_field():
    rng = random.Random(17)
    for _ in range(30):
        t = rng.randrange(0, 3)
        e_max = rng.randrange(0, 3)
        k = t + 2 * e_max + 1 + rng.randrange(0, 2)
        coeffs = [rng.randrange(WORD_FIELD.p) for _ in range(t + 1)]
        xs = rng.sample(range(1, 500), k)
        points = [(x, poly_eval(coeffs, x, WORD_FIELD)) for x in xs]
        corrupt = rng.sample(range(k), e_max)
        for i in corrupt:
            x, y = points[i]
            points[i] = (x, (y + rng.randrange(1, WORD_FIELD.p)) % WORD_FIELD.p)
        decoded, errors = berlekamp_welch_decode(points, t, e_max, WORD_FIELD)
        assert decoded == normalize(coeffs, WORD_FIELD)
        assert errors == {xs[i] for i in corrupt}


def test_decode_requires_enough_points():
    with pytest.raises(ValueError):
        berlekamp_welch_decode([(1, 1), (2, 2)], 1, 1, GF7)
