"""Fixed-point amounts with 18 fractional decimal digits.

Every monetary quantity in the simulator (ETH, DAI, prices, ratios used
in vault math) is an integer count of 10**-18 units, the on-chain "wad"
convention. Multiplication and division truncate toward zero, so results
are bit-identical across runs and platforms; Python integers never
overflow, so arithmetic is exact at any magnitude.
"""

from __future__ import annotations

from decimal import Decimal, InvalidOperation

from .errors import InvalidAmount

WAD = 10**18


def _trunc_div(a: int, b: int) -> int:
    # Python's // floors; fixed-point division must truncate toward zero.
    q = abs(a) // abs(b)
    return -q if (a < 0) != (b < 0) else q


def _ceil_div(a: int, b: int) -> int:
    # Positive operands only: smallest integer >= a / b.
    return -((-a) // b)


class Wad(int):
    """Integer-backed fixed-point number (18 decimals).

    The constructor takes the raw integer count of 10**-18 units; use
    :meth:`from_str` or :meth:`from_number` for human-scale values.
    ``+`` and ``-`` are exact; ``*`` and ``/`` are fixed-point multiply
    and divide between two Wads, truncating toward zero.
    """

    __slots__ = ()

    @classmethod
    def from_str(cls, text: str) -> "Wad":
        """Parse a decimal string exactly; more than 18 fractional digits
        or anything non-finite is rejected rather than silently rounded."""
        try:
            d = Decimal(text)
        except InvalidOperation:
            raise InvalidAmount(f"not a decimal amount: {text!r}") from None
        if not d.is_finite():
            raise InvalidAmount(f"amount must be finite: {text!r}")
        # scale by hand: Decimal arithmetic would round past 28 digits
        sign, digits, exponent = d.as_tuple()
        mantissa = int("".join(map(str, digits)) or "0")
        shift = exponent + 18
        if shift >= 0:
            raw = mantissa * 10**shift
        else:
            raw, remainder = divmod(mantissa, 10**-shift)
            if remainder:
                raise InvalidAmount(f"more than 18 fractional digits: {text!r}")
        return cls(-raw if sign else raw)

    @classmethod
    def from_number(cls, value: int | float) -> "Wad":
        if isinstance(value, int):
            return cls(value * WAD)
        return cls.from_str(str(value))

    # -- arithmetic ---------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, Wad):
            raise TypeError("Wad + non-Wad")
        return Wad(int(self) + int(other))

    def __sub__(self, other):
        if not isinstance(other, Wad):
            raise TypeError("Wad - non-Wad")
        return Wad(int(self) - int(other))

    def __mul__(self, other):
        if not isinstance(other, Wad):
            raise TypeError("Wad * non-Wad (use .scale for integer factors)")
        return Wad(_trunc_div(int(self) * int(other), WAD))

    def __truediv__(self, other):
        if not isinstance(other, Wad):
            raise TypeError("Wad / non-Wad")
        return Wad(_trunc_div(int(self) * WAD, int(other)))

    def __floordiv__(self, other):  # pragma: no cover - guard rail
        raise TypeError("use / for fixed-point division")

    def __neg__(self):
        return Wad(-int(self))

    def __abs__(self):
        return Wad(abs(int(self)))

    def mul_ceil(self, other: "Wad") -> "Wad":
        """Fixed-point multiply rounding up (positive operands)."""
        return Wad(_ceil_div(int(self) * int(other), WAD))

    def div_ceil(self, other: "Wad") -> "Wad":
        """Fixed-point divide rounding up (positive operands)."""
        return Wad(_ceil_div(int(self) * WAD, int(other)))

    def scale(self, factor: int) -> "Wad":
        """Exact multiplication by a plain integer (e.g. gas units)."""
        if not isinstance(factor, int) or isinstance(factor, Wad):
            raise TypeError("scale factor must be a plain int")
        return Wad(int(self) * factor)

    # -- conversions ---------------------------------------------------

    def __float__(self) -> float:
        return int(self) / WAD

    def __str__(self) -> str:
        raw = int(self)
        sign = "-" if raw < 0 else ""
        whole, frac = divmod(abs(raw), WAD)
        if frac == 0:
            return f"{sign}{whole}"
        return f"{sign}{whole}.{frac:018d}".rstrip("0")

    def __repr__(self) -> str:
        return f"Wad('{self}')"


ZERO = Wad(0)
ONE = Wad(WAD)


def wmin(a: Wad, b: Wad) -> Wad:
    return a if a <= b else b


def wmax(a: Wad, b: Wad) -> Wad:
    return a if a >= b else b
