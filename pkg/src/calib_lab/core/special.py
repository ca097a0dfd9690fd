"""Special functions used by the distributions and tests.

Scalar kernels are jitted; the ``*_array`` helpers apply them elementwise and
pick the numba loop or the numpy fallback. Accuracy target is about 1e-12
absolute (checked against scipy in the test suite, scipy is never imported
here).
"""

from __future__ import annotations

import math

import numpy as np

from calib_lab._accel import USE_NUMBA, njit

SQRT1_2 = 0.7071067811865476
LOG_SQRT_2PI = 0.9189385332046728
_EPS = 1e-16
_FPMIN = 1e-300


# --------------------------------------------------------------------------
# normal
# --------------------------------------------------------------------------

@njit
def ndtr(x):
    return 0.5 * math.erfc(-x * SQRT1_2)


@njit
def ndtr_upper(x):
    return 0.5 * math.erfc(x * SQRT1_2)


@njit
def norm_pdf(x):
    return math.exp(-0.5 * x * x - LOG_SQRT_2PI)


@njit
def _as241(p):
    # Wichura (1988), algorithm AS 241 (PPND16).
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    x = num / den
    return -x if q < 0.0 else x


@njit
def ndtri(p):
    """Standard normal quantile: AS 241 plus one Newton step on erfc."""
    if not (p > 0.0):
        return -math.inf if p == 0.0 else math.nan
    if not (p < 1.0):
        return math.inf if p == 1.0 else math.nan
    x = _as241(p)
    dens = norm_pdf(x)
    if dens > 0.0:
        if p < 0.5:
            x -= (ndtr(x) - p) / dens
        else:
            x += (ndtr_upper(x) - (1.0 - p)) / dens
    return x


# --------------------------------------------------------------------------
# incomplete beta / gamma
# --------------------------------------------------------------------------

@njit
def _betacf(a, b, x):
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, 10000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h


@njit
def betainc2(a, b, x, xc):
    """Regularised I_x(a, b) given both x and xc = 1 - x (kept separate for accuracy)."""
    if x <= 0.0:
        return 0.0
    if xc <= 0.0:
        return 1.0
    lbt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
           + a * math.log(x) + b * math.log(xc))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lbt) * _betacf(a, b, x) / a
    return 1.0 - math.exp(lbt) * _betacf(b, a, xc) / b


@njit
def betainc(a, b, x):
    return betainc2(a, b, x, 1.0 - x)


@njit
def _gamma_series(a, x):
    ap = a
    total = 1.0 / a
    term = total
    for _ in range(200000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


@njit
def _gamma_cf(a, x):
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, 200000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


@njit
def gammainc(a, x):
    """Regularised lower incomplete gamma P(a, x)."""
    if x <= 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cf(a, x)


@njit
def gammaincc(a, x):
    """Regularised upper incomplete gamma Q(a, x)."""
    if x <= 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


@njit
def chi2_cdf(x, k):
    return gammainc(0.5 * k, 0.5 * x)


@njit
def chi2_sf(x, k):
    return gammaincc(0.5 * k, 0.5 * x)


# --------------------------------------------------------------------------
# Student t (standard: location 0, scale 1)
# --------------------------------------------------------------------------

@njit
def _t_lower_tail(t, nu):
    # P(T <= t) for t <= 0
    if t == 0.0:
        return 0.5
    at = abs(t)
    if at > 1.0:
        r = nu / (at * at)
        x = r / (1.0 + r)
        xc = 1.0 / (1.0 + r)
    else:
        q = at * at / nu
        x = 1.0 / (1.0 + q)
        xc = q / (1.0 + q)
    return 0.5 * betainc2(0.5 * nu, 0.5, x, xc)


@njit
def t_cdf(t, nu):
    if math.isnan(t):
        return math.nan
    if t <= 0.0:
        return _t_lower_tail(t, nu)
    return 1.0 - _t_lower_tail(-t, nu)


@njit
def t_logpdf(t, nu):
    return (math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu)
            - 0.5 * math.log(nu * math.pi) - 0.5 * (nu + 1.0) * math.log1p(t * t / nu))


@njit
def t_pdf(t, nu):
    return math.exp(t_logpdf(t, nu))


@njit
def _t_tail_quantile(q, nu):
    # solve P(T <= t) = q for q in (0, 0.5); returns t <= 0
    if nu == 1.0:
        return -1.0 / math.tan(math.pi * q)
    if nu == 2.0:
        return (2.0 * q - 1.0) / math.sqrt(2.0 * q * (1.0 - q))
    z = ndtri(q)
    if nu > 1e5:
        z3 = z * z * z
        return z + (z3 + z) / (4.0 * nu)
    z2 = z * z
    t = z + (z2 * z + z) / (4.0 * nu) + (5.0 * z2 * z2 * z + 16.0 * z2 * z + 3.0 * z) / (96.0 * nu * nu)
    if not (t < 0.0):
        t = -1e-3
    # bracket [lo, hi] with F(lo) <= q <= F(hi)
    hi = 0.0
    lo = t
    flo = _t_lower_tail(lo, nu)
    while flo > q:
        hi = lo
        lo *= 2.0
        flo = _t_lower_tail(lo, nu)
    if lo != t:
        t = 0.5 * (lo + hi) if hi != 0.0 else lo
    logq = math.log(q)
    for _ in range(300):
        f = _t_lower_tail(t, nu)
        if f == q:
            return t
        if f < q:
            lo = t
        else:
            hi = t
        # Newton on log F, which is close to linear in log|t| out in the tail
        step = (math.log(f) - logq) * f / t_pdf(t, nu)
        tn = t - step
        if not (lo < tn < hi):
            tn = 0.5 * (lo + hi)
        if abs(tn - t) <= 1e-15 * (1.0 + abs(t)):
            return tn
        t = tn
    return t


@njit
def t_ppf(p, nu):
    if not (p > 0.0):
        return -math.inf if p == 0.0 else math.nan
    if not (p < 1.0):
        return math.inf if p == 1.0 else math.nan
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return _t_tail_quantile(p, nu)
    return -_t_tail_quantile(1.0 - p, nu)


# --------------------------------------------------------------------------
# array helpers
# --------------------------------------------------------------------------

@njit
def _ndtr_loop(x):
    out = np.empty(x.size)
    for i in range(x.size):
        out[i] = ndtr(x[i])
    return out


@njit
def _ndtri_loop(p):
    out = np.empty(p.size)
    for i in range(p.size):
        out[i] = ndtri(p[i])
    return out


@njit
def _t_cdf_loop(t, nu):
    out = np.empty(t.size)
    for i in range(t.size):
        out[i] = t_cdf(t[i], nu)
    return out


@njit
def _t_ppf_loop(p, nu):
    out = np.empty(p.size)
    for i in range(p.size):
        out[i] = t_ppf(p[i], nu)
    return out


_erfc_ufunc = np.frompyfunc(math.erfc, 1, 1)


def _ndtr_numpy(x):
    return 0.5 * _erfc_ufunc(-x * SQRT1_2).astype(float)


def _ndtri_numpy(p):
    p = np.asarray(p, dtype=float)
    out = np.full(p.shape, np.nan)
    out[p == 0.0] = -np.inf
    out[p == 1.0] = np.inf
    ok = (p > 0.0) & (p < 1.0)
    pp = p[ok]
    q = pp - 0.5
    x = np.empty_like(pp)
    central = np.abs(q) <= 0.425
    qc = q[central]
    r = 0.180625 - qc * qc
    num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
              + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
            + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
    den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
              + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
            + 4.2313330701600911252e1) * r + 1.0)
    x[central] = qc * num / den
    tail = ~central
    qt = q[tail]
    r = np.sqrt(-np.log(np.where(qt < 0.0, pp[tail], 1.0 - pp[tail])))
    mid = r <= 5.0
    rm = r[mid] - 1.6
    num = (((((((7.74545014278341407640e-4 * rm + 2.27238449892691845833e-2) * rm
                + 2.41780725177450611770e-1) * rm + 1.27045825245236838258e0) * rm
              + 3.64784832476320460504e0) * rm + 5.76949722146069140550e0) * rm
            + 4.63033784615654529590e0) * rm + 1.42343711074968357734e0)
    den = (((((((1.05075007164441684324e-9 * rm + 5.47593808499534494600e-4) * rm
                + 1.51986665636164571966e-2) * rm + 1.48103976427480074590e-1) * rm
              + 6.89767334985100004550e-1) * rm + 1.67638483018380384940e0) * rm
            + 2.05319162663775882187e0) * rm + 1.0)
    xt = np.empty_like(r)
    xt[mid] = num / den
    rf = r[~mid] - 5.0
    num = (((((((2.01033439929228813265e-7 * rf + 2.71155556874348757815e-5) * rf
                + 1.24266094738807843860e-3) * rf + 2.65321895265761230930e-2) * rf
              + 2.96560571828504891230e-1) * rf + 1.78482653991729133580e0) * rf
            + 5.46378491116411436990e0) * rf + 6.65790464350110377720e0)
    den = (((((((2.04426310338993978564e-15 * rf + 1.42151175831644588870e-7) * rf
                + 1.84631831751005468180e-5) * rf + 7.86869131145613259100e-4) * rf
              + 1.48753612908506148525e-2) * rf + 1.36929880922735805310e-1) * rf
            + 5.99832206555887937690e-1) * rf + 1.0)
    xt[~mid] = num / den
    x[tail] = np.where(qt < 0.0, -xt, xt)
    dens = np.exp(-0.5 * x * x - LOG_SQRT_2PI)
    safe = dens > 0.0
    lower = pp < 0.5
    low_err = _ndtr_numpy(x) - pp
    up_err = 0.5 * _erfc_ufunc(x * SQRT1_2).astype(float) - (1.0 - pp)
    step = np.where(lower, -low_err, up_err)
    x = np.where(safe, x + np.divide(step, dens, out=np.zeros_like(x), where=safe), x)
    out[ok] = x
    return out


def _vectorize(scalar):
    v = np.vectorize(scalar, otypes=[float])
    return v


def ndtr_array(x):
    x = np.asarray(x, dtype=float)
    if USE_NUMBA:
        return _ndtr_loop(np.ascontiguousarray(x).ravel()).reshape(x.shape)
    return _ndtr_numpy(x)


def ndtri_array(p):
    p = np.asarray(p, dtype=float)
    if USE_NUMBA:
        return _ndtri_loop(np.ascontiguousarray(p).ravel()).reshape(p.shape)
    return _ndtri_numpy(p)


def t_cdf_array(t, nu):
    t = np.asarray(t, dtype=float)
    if USE_NUMBA:
        return _t_cdf_loop(np.ascontiguousarray(t).ravel(), float(nu)).reshape(t.shape)
    return _vectorize(t_cdf)(t, float(nu))


def t_ppf_array(p, nu):
    p = np.asarray(p, dtype=float)
    if USE_NUMBA:
        return _t_ppf_loop(np.ascontiguousarray(p).ravel(), float(nu)).reshape(p.shape)
    return _vectorize(t_ppf)(p, float(nu))
