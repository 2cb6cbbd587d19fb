"""Prime-field arithmetic, Lagrange interpolation, and error-locating
Reed-Solomon decoding.

Polynomials are plain lists of ints, lowest-degree coefficient first.
Evaluation-point lists are ``(x, y)`` tuples with pairwise-distinct nonzero
``x``.  The default deployment field is GF(65537): 65537 is prime, exceeds
any supported server count, and exceeds 2**16 so a big-endian byte pair
packs into one word injectively.
"""

from __future__ import annotations

WORD_MODULUS = 65537


class DecodeFailure(Exception):
    """No polynomial of the requested degree is consistent with enough
    evaluation points; the caller saw more corruption than it can correct."""


class PrimeField:
    """Arithmetic mod a prime ``p``."""

    __slots__ = ("p",)

    def __init__(self, p: int) -> None:
        if p < 2 or pow(2, p, p) != 2 % p:
            raise ValueError(f"{p} fails the Fermat base-2 primality check")
        self.p = p

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.p

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.p

    def mul(self, a: int, b: int) -> int:
        return (a * b) % self.p

    def neg(self, a: int) -> int:
        return (-a) % self.p

    def inv(self, a: int) -> int:
        if a % self.p == 0:
            raise ZeroDivisionError("inverse of zero in prime field")
        return pow(a, self.p - 2, self.p)

    def div(self, a: int, b: int) -> int:
        return self.mul(a, self.inv(b))

    def __repr__(self) -> str:
        return f"PrimeField({self.p})"


WORD_FIELD = PrimeField(WORD_MODULUS)


def normalize(coeffs: list[int], field: PrimeField) -> list[int]:
    """Reduce coefficients and strip trailing zeros (zero poly -> [0])."""
    out = [c % field.p for c in coeffs]
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return out or [0]


def poly_eval(coeffs: list[int], x: int, field: PrimeField) -> int:
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x + c) % field.p
    return acc


def poly_mul(a: list[int], b: list[int], field: PrimeField) -> list[int]:
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            out[i + j] = (out[i + j] + ai * bj) % field.p
    return normalize(out, field)


def poly_divmod(
    num: list[int], den: list[int], field: PrimeField
) -> tuple[list[int], list[int]]:
    """Quotient and remainder of polynomial division over the field."""
    den = normalize(den, field)
    if den == [0]:
        raise ZeroDivisionError("polynomial division by zero")
    rem = [c % field.p for c in num]
    if len(rem) < len(den):
        return [0], normalize(rem, field)
    quot = [0] * (len(rem) - len(den) + 1)
    inv_lead = field.inv(den[-1])
    for shift in range(len(quot) - 1, -1, -1):
        factor = (rem[shift + len(den) - 1] * inv_lead) % field.p
        quot[shift] = factor
        if factor:
            for i, d in enumerate(den):
                rem[shift + i] = (rem[shift + i] - factor * d) % field.p
    return normalize(quot, field), normalize(rem, field)


def _check_distinct_x(points: list[tuple[int, int]]) -> None:
    xs = [x for x, _ in points]
    if len(set(xs)) != len(xs):
        raise ValueError("duplicate x coordinate in evaluation points")


def lagrange_interpolate(
    points: list[tuple[int, int]], field: PrimeField
) -> list[int]:
    """Coefficients of the unique degree <= len(points)-1 interpolant."""
    if not points:
        raise ValueError("cannot interpolate zero points")
    _check_distinct_x(points)
    result = [0] * len(points)
    for i, (xi, yi) in enumerate(points):
        basis = [1]
        denom = 1
        for j, (xj, _) in enumerate(points):
            if j == i:
                continue
            basis = poly_mul(basis, [field.neg(xj), 1], field)
            denom = field.mul(denom, field.sub(xi, xj))
        scale = field.mul(yi % field.p, field.inv(denom))
        for j, c in enumerate(basis):
            result[j] = (result[j] + c * scale) % field.p
    return normalize(result, field)


def lagrange_eval_at_zero(points: list[tuple[int, int]], field: PrimeField) -> int:
    """f(0) for the unique interpolant through ``points``.

    Cheaper than full interpolation: only the Lagrange weights at zero are
    formed.
    """
    if not points:
        raise ValueError("cannot interpolate zero points")
    _check_distinct_x(points)
    acc = 0
    for i, (xi, yi) in enumerate(points):
        num = 1
        den = 1
        for j, (xj, _) in enumerate(points):
            if j == i:
                continue
            num = field.mul(num, field.neg(xj))
            den = field.mul(den, field.sub(xi, xj))
        acc = (acc + yi * field.mul(num, field.inv(den))) % field.p
    return acc


def solve_linear(
    rows: list[list[int]], rhs: list[int], field: PrimeField
) -> list[int] | None:
    """One solution of ``rows @ z = rhs`` over the field, or None if the
    system is inconsistent.  Free variables are set to zero."""
    n_rows = len(rows)
    n_cols = len(rows[0]) if rows else 0
    aug = [list(row) + [b] for row, b in zip(rows, rhs)]
    pivot_cols: list[int] = []
    r = 0
    for c in range(n_cols):
        pivot = next((i for i in range(r, n_rows) if aug[i][c] % field.p), None)
        if pivot is None:
            continue
        aug[r], aug[pivot] = aug[pivot], aug[r]
        inv = field.inv(aug[r][c])
        aug[r] = [(v * inv) % field.p for v in aug[r]]
        for i in range(n_rows):
            if i != r and aug[i][c] % field.p:
                factor = aug[i][c]
                aug[i] = [(vi - factor * vr) % field.p for vi, vr in zip(aug[i], aug[r])]
        pivot_cols.append(c)
        r += 1
        if r == n_rows:
            break
    for i in range(r, n_rows):
        if aug[i][n_cols] % field.p:
            return None
    solution = [0] * n_cols
    for row_idx, c in enumerate(pivot_cols):
        solution[c] = aug[row_idx][n_cols]
    return solution


def berlekamp_welch_decode(
    points: list[tuple[int, int]],
    t: int,
    e_max: int,
    field: PrimeField,
) -> tuple[list[int], set[int]]:
    """Recover the degree <= t polynomial behind ``points`` despite up to
    ``e_max`` corrupted values.

    Returns ``(coefficients, error_xs)`` where ``error_xs`` is the set of
    x coordinates whose y value disagrees with the decoded polynomial.
    Raises :class:`DecodeFailure` when no degree <= t polynomial matches at
    least ``len(points) - e_max`` of the points.

    Requires ``len(points) >= t + 2*e_max + 1`` and distinct x values.
    """
    k = len(points)
    if t < 0 or e_max < 0:
        raise ValueError("t and e_max must be non-negative")
    if k < t + 2 * e_max + 1:
        raise ValueError(f"need at least {t + 2 * e_max + 1} points, got {k}")
    _check_distinct_x(points)
    pts = [(x % field.p, y % field.p) for x, y in points]

    # Fast path: the interpolant through the first t+1 points explains every
    # point, so nothing was corrupted.
    candidate = lagrange_interpolate(pts[: t + 1], field)
    if all(poly_eval(candidate, x, field) == y for x, y in pts):
        return candidate, set()

    # Berlekamp-Welch: find Q (deg <= t+e) and monic E (deg e = e_max) with
    # Q(x_i) = y_i * E(x_i) for all i, then f = Q / E.
    e = e_max
    n_q = t + e + 1
    rows: list[list[int]] = []
    rhs: list[int] = []
    for x, y in pts:
        powers = [1]
        for _ in range(max(n_q, e + 1) - 1):
            powers.append((powers[-1] * x) % field.p)
        row = powers[:n_q] + [(-y * powers[j]) % field.p for j in range(e)]
        rows.append(row)
        rhs.append((y * powers[e]) % field.p)
    solution = solve_linear(rows, rhs, field)
    if solution is None:
        raise DecodeFailure("no degree-bounded polynomial explains the points")
    q_coeffs = normalize(solution[:n_q], field)
    e_coeffs = normalize(solution[n_q:] + [1], field)
    f_coeffs, rem = poly_divmod(q_coeffs, e_coeffs, field)
    if rem != [0]:
        raise DecodeFailure("error locator does not divide the quotient")
    f_coeffs = normalize(f_coeffs, field)
    if len(f_coeffs) - 1 > t:
        raise DecodeFailure("decoded polynomial exceeds the degree bound")
    errors = {x for x, y in pts if poly_eval(f_coeffs, x, field) != y}
    if len(errors) > e_max:
        raise DecodeFailure(f"{len(errors)} disagreements exceed e_max={e_max}")
    return f_coeffs, errors
