"""Log of the modified Bessel function of the first kind, I_nu(x).

Two regimes, both evaluated in log space so that orders up to a few hundred
and arguments up to ~1e7 never overflow:

* ``x < max(20, nu)``: the ascending power series.
* otherwise: the uniform (Debye/Olver) asymptotic expansion, written in terms
  of ``r = sqrt(nu^2 + x^2)`` so that it remains valid at ``nu = 0``.
"""

from fractions import Fraction
import math

__all__ = ["log_iv", "log_iv_series_sum", "debye_polynomials", "SERIES_CUTOFF"]

SERIES_CUTOFF = 20.0
_N_DEBYE = 12


def _poly_derivative(c):
    return [k * c[k] for k in range(1, len(c))] or [Fraction(0)]


def _poly_mul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                out[i + j] += ai * bj
    return out


def _poly_add(a, b):
    n = max(len(a), len(b))
    a = a + [Fraction(0)] * (n - len(a))
    b = b + [Fraction(0)] * (n - len(b))
    return [x + y for x, y in zip(a, b)]


def _poly_integrate(c):
    return [Fraction(0)] + [ck / (k + 1) for k, ck in enumerate(c)]


def debye_polynomials(n):
    """Exact coefficients of the Debye polynomials U_0 .. U_{n-1}.

    Uses the recurrence
    ``U_{k+1}(p) = p^2 (1 - p^2) U_k'(p) / 2 + (1/8) int_0^p (1 - 5t^2) U_k(t) dt``.
    Each polynomial is a list of ``Fraction`` coefficients indexed by power.
    """
    half_p2_1mp2 = [Fraction(0), Fraction(0), Fraction(1, 2), Fraction(0), Fraction(-1, 2)]
    one_m_5t2 = [Fraction(1), Fraction(0), Fraction(-5)]
    polys = [[Fraction(1)]]
    for _ in range(n - 1):
        u = polys[-1]
        first = _poly_mul(half_p2_1mp2, _poly_derivative(u))
        second = [c / 8 for c in _poly_integrate(_poly_mul(one_m_5t2, u))]
        nxt = _poly_add(first, second)
        while len(nxt) > 1 and nxt[-1] == 0:
            nxt.pop()
        polys.append(nxt)
    return polys


# U_k only has powers p^k .. p^{3k}; store the shifted coefficients c_j of p^{j-k}
_DEBYE = [[float(c) for c in u[k:]] for k, u in enumerate(debye_polynomials(_N_DEBYE))]


def log_iv_series_sum(nu, x):
    """log of S where I_nu(x) = (x/2)^nu / Gamma(nu + 1) * S."""
    q = 0.25 * x * x
    total = 1.0
    term = 1.0
    k = 0
    while True:
        k += 1
        term *= q / (k * (k + nu))
        total += term
        # terms decrease monotonically once k(k + nu) > q
        if term < 1e-17 * total and k * (k + nu) > q:
            break
        if k > 100000:
            raise ArithmeticError(f"Bessel series did not converge (nu={nu}, x={x})")
    return math.log(total)


def _log_iv_uniform(nu, x):
    r = math.hypot(nu, x)
    p = nu / r
    eta = r + nu * math.log(x / (nu + r))
    total = 1.0
    prev = math.inf
    inv_rk = 1.0
    for k in range(1, _N_DEBYE):
        inv_rk /= r
        poly = 0.0
        for c in reversed(_DEBYE[k]):
            poly = poly * p + c
        term = poly * inv_rk
        # asymptotic series: stop at the smallest term
        if abs(term) >= prev:
            break
        total += term
        prev = abs(term)
        if prev < 1e-17:
            break
    return eta - 0.5 * math.log(2.0 * math.pi * r) + math.log(total)


def log_iv(nu, x):
    """Natural log of I_nu(x) for ``nu >= 0`` and ``x >= 0``.

    Returns ``-inf`` for ``x == 0`` and ``nu > 0`` and ``0.0`` for ``I_0(0)``.
    """
    nu = float(nu)
    x = float(x)
    if nu < 0 or x < 0 or not math.isfinite(x):
        raise ValueError(f"log_iv needs nu >= 0 and finite x >= 0, got nu={nu}, x={x}")
    if x == 0.0:
        return 0.0 if nu == 0.0 else -math.inf
    if x < max(SERIES_CUTOFF, nu):
        return nu * math.log(0.5 * x) - math.lgamma(nu + 1.0) + log_iv_series_sum(nu, x)
    return _log_iv_uniform(nu, x)
