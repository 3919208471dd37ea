"""Relative convergence rates of the CV and PI/SCV selectors."""

from __future__ import annotations

from decimal import ROUND_HALF_EVEN, Decimal, localcontext
from fractions import Fraction

R_ORDERS = (0, 1, 2)
SAMPLE_SIZES = (10**3, 10**4, 10**5)
DIMENSIONS = (2, 3, 4, 5)
BASE_N = 1000
BASE_EXPONENT = Fraction(-1, 6)


def cv_exponent(d: int, r: int) -> Fraction:
    return Fraction(-d, 2 * d + 4 * r + 8)


def pi_exponent(d: int, r: int) -> Fraction:
    return Fraction(-2, d + 2 * r + 6)


def _relative(n: int, e: Fraction, prec: int = 40) -> Decimal:
    """``n^e / 1000^{-1/6}`` to ``prec`` significant digits."""
    with localcontext() as ctx:
        ctx.prec = prec
        num = Decimal(e.numerator) / Decimal(e.denominator)
        base = Decimal(BASE_EXPONENT.numerator) / Decimal(BASE_EXPONENT.denominator)
        return (num * Decimal(n).ln() - base * Decimal(BASE_N).ln()).exp()


def relative_rate(n: int, d: int, r: int, method: str) -> Decimal:
    method = method.lower()
    if method == "cv":
        return _relative(n, cv_exponent(d, r))
    if method in ("pi", "scv", "pi/scv"):
        return _relative(n, pi_exponent(d, r))
    raise ValueError(f"no rate for method {method!r}")


def rate_table(digits: int = 3) -> list[dict]:
    """All ``3 x 3 x 4 x 2 = 72`` entries, rounded to ``digits`` decimals."""
    q = Decimal(1).scaleb(-digits)
    rows = []
    for r in R_ORDERS:
        for n in SAMPLE_SIZES:
            for d in DIMENSIONS:
                for method in ("CV", "PI/SCV"):
                    value = relative_rate(n, d, r, method).quantize(q, rounding=ROUND_HALF_EVEN)
                    rows.append(dict(r=r, n=n, d=d, method=method, value=value))
    return rows


def format_rate_table(rows: list[dict] | None = None) -> str:
    rows = rows if rows is not None else rate_table()
    lookup = {(e["r"], e["n"], e["d"], e["method"]): e["value"] for e in rows}
    head = ["r", "n"] + [f"d={d} {m}" for d in DIMENSIONS for m in ("CV", "PI/SCV")]
    lines = ["  ".join(f"{h:>10}" for h in head)]
    for r in R_ORDERS:
        for n in SAMPLE_SIZES:
            cells = [str(r), f"10^{len(str(n)) - 1}"]
            cells += [str(lookup[(r, n, d, m)]) for d in DIMENSIONS for m in ("CV", "PI/SCV")]
            lines.append("  ".join(f"{c:>10}" for c in cells))
    return "\n".join(lines)
