"""Exact arithmetic helpers and the power-of-(1 + 1/L) price representation.

Rationals are :class:`fractions.Fraction` throughout: canonical form is kept by
the stdlib and no operation rounds implicitly.  Prices in fixed-precision mode
are integer exponents ``k`` standing for ``(1 + 1/L)**k``; the functions below
evaluate such powers in fixed point with a certified error bound and round
them back to the grids the solver works on.
"""
from __future__ import annotations

import decimal
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .errors import PrecisionError

BigRational = Fraction

# Bound used wherever the constant e must be compared exactly: e < 2719/1000.
E_UPPER = Fraction(2719, 1000)

PUBLISHED_R = 256


def ceil_log2(x):
    """Smallest integer m with 2**m >= x, for positive rationals x."""
    x = Fraction(x)
    if x <= 0:
        raise ValueError("ceil_log2 needs a positive argument")
    m = max(x.numerator.bit_length() - x.denominator.bit_length() - 1, 0)
    while Fraction(2) ** m < x:
        m += 1
    while m > 0 and Fraction(2) ** (m - 1) >= x:
        m -= 1
    return m


def fixed_point_bits(n, U, L):
    """Fractional bits used for fixed-point powers on an instance of size n."""
    return 4 * n * ceil_log2(n * U) + 2 * ceil_log2(L) + 64


def _auto_bits(k, L):
    # (1 + 1/L)**k <= e**(k/L) < 2**(1.5 k/L); absolute error grows like value * k * 2**-Z
    magnitude = (3 * k) // (2 * L) + 2
    return magnitude + k.bit_length() + L.bit_length() + 80


def _fixed_power(k, L, Z):
    """Return (v, err): v / 2**Z approximates (1 + 1/L)**k within err / 2**Z."""
    one = 1 << Z
    base = ((L + 1) << Z) // L
    base_err = 1
    acc, acc_err = one, 0
    while k:
        if k & 1:
            acc, acc_err = _mul(acc, acc_err, base, base_err, Z)
        k >>= 1
        if k:
            base, base_err = _mul(base, base_err, base, base_err, Z)
    return acc, acc_err


def _mul(x, ex, y, ey, Z):
    # x, y carry absolute errors ex, ey (units of 2**-Z); truncation adds at most one unit
    prod = (x * y) >> Z
    spread = (x + ex) * ey + (y + ey) * ex + ex * ey
    return prod, -(-spread >> Z) + 1


@lru_cache(maxsize=8192)
def _cached_power(k, L):
    return approx_power(k, L)


def approx_power(k, L, Z=None):
    """Fixed-point approximation b of (1 + 1/L)**k with |b - (1 + 1/L)**k| <= 1/(4L).

    ``Z`` is the number of fractional bits; when omitted it is sized from k
    and L.  The error bound is tracked alongside the value and a
    :class:`PrecisionError` is raised instead of returning an uncertified b.
    """
    if k < 0 or L < 1:
        raise ValueError("approx_power needs k >= 0 and L >= 1")
    if k == 0:
        return Fraction(1)
    if Z is None:
        Z = _auto_bits(k, L)
    v, err = _fixed_power(k, L, Z)
    if 4 * L * err > (1 << Z):
        raise PrecisionError(
            f"{Z} fractional bits cannot certify (1+1/{L})**{k} to within 1/(4L)"
        )
    return Fraction(v, 1 << Z)


def round_to_denominator(value_approx, L):
    """Nearest integer to value_approx * L (ties to even).

    With value_approx within 1/(4L) of some a >= 1 and L >= 3, q/L is both an
    additive 1/L and a multiplicative (1 + 1/L) approximation of a.
    """
    return round(Fraction(value_approx) * L)


def round_factor_to_power(x_hat, L):
    """Exponent k such that (1 + 1/L)**k is within a factor 1 + 1/L of x_hat.

    Starts from a decimal-logarithm guess, then gallops and bisects; each probe compares x_hat against a
    fixed-point power b shrunk by its certified error 1/(4L), so the returned
    k satisfies the multiplicative contract for the true power, not only for b.
    """
    x_hat = Fraction(x_hat)
    if x_hat < 1:
        raise ValueError(f"round_factor_to_power needs x_hat >= 1, got {x_hat}")
    grow = Fraction(L + 1, L)
    slack = Fraction(1, 4 * L)

    def direction(ell):
        b = _cached_power(ell, L)
        if x_hat > (b - slack) * grow:
            return 1
        if x_hat * grow < b + slack:
            return -1
        return 0

    guess = _log_guess(x_hat, L)
    d = direction(guess)
    if d == 0:
        return guess
    # gallop away from the guess until the answer is bracketed
    step = 1
    if d > 0:
        lo = guess
        while True:
            hi = lo + step
            d = direction(hi)
            if d == 0:
                return hi
            if d < 0:
                break
            lo, step = hi, step * 2
    else:
        hi = guess
        while True:
            if hi == 0:
                raise PrecisionError(f"no exponent found for {x_hat} with L={L}")
            lo = max(hi - step, 0)
            d = direction(lo)
            if d == 0:
                return lo
            if d > 0:
                break
            hi, step = lo, step * 2
    # invariant: direction(lo) > 0 and direction(hi) < 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        d = direction(mid)
        if d == 0:
            return mid
        if d > 0:
            lo = mid
        else:
            hi = mid
    raise PrecisionError(f"no exponent found for {x_hat} with L={L}")


def _log_guess(x_hat, L):
    """Nearest integer to log(x_hat) / log(1 + 1/L), from a decimal logarithm.

    Only a starting point for the search, so truncating huge numerators and
    denominators to their leading bits is fine.
    """
    if x_hat == 1:
        return 0
    bits = 2 * L.bit_length() + 96
    ctx = decimal.Context(prec=bits * 31 // 100 + 20)
    ln2 = decimal.Decimal(2).ln(ctx)

    def ln(v):
        shift = max(v.bit_length() - bits, 0)
        return ctx.add(decimal.Decimal(v >> shift).ln(ctx), ctx.multiply(ln2, shift))

    num = ctx.subtract(ln(x_hat.numerator), ln(x_hat.denominator))
    base = ctx.subtract(ln(L + 1), ln(L))
    return max(0, int(ctx.divide(num, base).to_integral_value(decimal.ROUND_HALF_EVEN)))


def round_utility(u, L):
    """Exponent e with u/(1 + 1/L) <= (1 + 1/L)**e <= u(1 + 1/L)."""
    if u <= 0:
        raise ValueError("zero utilities are never rounded")
    return round_factor_to_power(u, L)


def power_value(k, L):
    """Exact (1 + 1/L)**k.  Only sensible for small k * log(L)."""
    return Fraction(L + 1, L) ** k


@dataclass(frozen=True)
class PowerPrice:
    exponent: int
    L: int

    def approx(self, Z=None):
        return approx_power(self.exponent, self.L, Z)

    def rounded(self):
        """The denominator-L rational used as a network capacity."""
        return Fraction(round_to_denominator(self.approx(), self.L), self.L)


@dataclass(frozen=True)
class SolverConstants:
    """Loop constants.  ``L``, ``K`` and ``xmax_exp`` are set in fixed mode only."""

    n: int
    U: int
    R: Fraction
    eps: Fraction
    x_max: Fraction
    L: int | None = None
    K: int | None = None
    xmax_exp: int | None = None
    profile: str = "paper"

    @property
    def delta(self):
        # defined alongside the others but unused by the loop
        return Fraction(self.n**5) / self.eps


def published_eps(n, U):
    return Fraction(1, 8 * n ** (4 * n) * U ** (3 * n))


def published_L(n, U):
    return 128 * n ** (5 * n + 5) * U ** (4 * n)


def make_constants(n, U, mode="fixed", R=PUBLISHED_R, eps=None, L=None, profile="paper"):
    """Build loop constants; omitted values fall back to the published ones."""
    R = Fraction(R)
    eps = published_eps(n, U) if eps is None else Fraction(eps)
    x_max = 1 + 1 / (R * n**3)
    if mode == "exact":
        return SolverConstants(n, U, R, eps, x_max, profile=profile)
    if mode != "fixed":
        raise ValueError(f"unknown mode {mode!r}")
    if L is None:
        L = published_L(n, U)
    if L < 3:
        raise ValueError("L must be at least 3")
    grow = Fraction(L + 1, L)
    # (1+1/L)**m in [x_max/(1+1/L)**2, x_max]
    xmax_exp = round_factor_to_power(x_max / grow, L)
    if xmax_exp < 1:
        raise ValueError(f"L={L} is too coarse for x_max={x_max}")
    K = round_factor_to_power(Fraction((n * U) ** n) * grow, L)
    return SolverConstants(n, U, R, eps, x_max, L=L, K=K, xmax_exp=xmax_exp, profile=profile)


def fast_constants(n, U, mode="fixed", tier=0):
    """Reduced constants for quick runs; correctness rests on exact verification.

    Tier 0 is the default quick profile; each higher tier tightens eps and L
    by a factor (nU)**n.
    """
    scale = (n * U) ** n
    eps = Fraction(1, 64 * n**2 * U * scale ** (tier + 1))
    L = max(1 << 24, 16 * n**5 * scale * eps.denominator)
    return make_constants(n, U, mode, R=1, eps=eps, L=L, profile=f"fast{tier}")
