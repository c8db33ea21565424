"""Hot loops, each with a numba version and a pure-numpy version.

The public names at the bottom point at the numba versions unless numba is
disabled (see ``_backend``).  ``KERNELS`` exposes both for parity tests and
benchmarks.
"""

import numpy as np

from ._backend import USE_NUMBA, njit

GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(16)
# Largest log-width of a Gauss-Legendre panel when integrating f** segments.
PANEL_WIDTH = 0.5


# ---------------------------------------------------------------- convolution


def convolve_offsets_numpy(values, offsets, weights):
    """``out[x] = sum_m weights[m] * values[x - offsets[m]]`` on the periodic grid."""
    out = np.zeros_like(values)
    axes = tuple(range(values.ndim))
    for off, w in zip(offsets, weights):
        out += w * np.roll(values, tuple(off), axis=axes)
    return out


@njit
def _convolve_2d(values, offsets, weights):
    N0, N1 = values.shape
    out = np.zeros_like(values)
    for m in range(offsets.shape[0]):
        a = offsets[m, 0]
        b = offsets[m, 1]
        w = weights[m]
        for i in range(N0):
            si = (i - a) % N0
            for j in range(N1):
                out[i, j] += w * values[si, (j - b) % N1]
    return out


@njit
def _convolve_3d(values, offsets, weights):
    N0, N1, N2 = values.shape
    out = np.zeros_like(values)
    for m in range(offsets.shape[0]):
        a = offsets[m, 0]
        b = offsets[m, 1]
        c = offsets[m, 2]
        w = weights[m]
        for i in range(N0):
            si = (i - a) % N0
            for j in range(N1):
                sj = (j - b) % N1
                for k in range(N2):
                    out[i, j, k] += w * values[si, sj, (k - c) % N2]
    return out


def convolve_offsets_numba(values, offsets, weights):
    values = np.ascontiguousarray(values, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if values.ndim == 2:
        return _convolve_2d(values, offsets, weights)
    return _convolve_3d(values, offsets, weights)


# ------------------------------------------------- f** segment integration


def _panel_layout(lo, hi):
    """Split each ``[log lo, log hi]`` into equal panels no wider than PANEL_WIDTH."""
    width = np.log(hi) - np.log(lo)
    counts = np.maximum(1, np.ceil(width / PANEL_WIDTH).astype(np.int64))
    return width, counts


def double_star_segments_numpy(beta, v, lo, hi, p, q):
    """Sum over segments of ``int_lo^hi (beta/t + v)^q t^(q/p) dt/t``."""
    if beta.size == 0:
        return 0.0
    width, counts = _panel_layout(lo, hi)
    seg = np.repeat(np.arange(beta.size), counts)
    first = np.cumsum(counts) - counts
    local = np.arange(seg.size) - first[seg]
    h = width[seg] / counts[seg]
    start = np.log(lo[seg]) + local * h
    u = start[:, None] + 0.5 * h[:, None] * (GAUSS_NODES[None, :] + 1.0)
    tau = np.exp(u)
    fss = beta[seg, None] / tau + v[seg, None]
    vals = fss**q * tau ** (q / p)
    return float(np.sum(0.5 * h * (vals @ GAUSS_WEIGHTS)))


@njit
def _double_star_segments(beta, v, lo, hi, p, q, nodes, weights, panel):
    total = 0.0
    for k in range(beta.shape[0]):
        a = np.log(lo[k])
        width = np.log(hi[k]) - a
        m = max(1, int(np.ceil(width / panel)))
        h = width / m
        acc = 0.0
        for j in range(m):
            s = a + j * h
            for g in range(nodes.shape[0]):
                tau = np.exp(s + 0.5 * h * (nodes[g] + 1.0))
                acc += weights[g] * 0.5 * h * (beta[k] / tau + v[k]) ** q * tau ** (q / p)
        total += acc
    return total


def double_star_segments_numba(beta, v, lo, hi, p, q):
    if beta.size == 0:
        return 0.0
    return float(
        _double_star_segments(
            np.asarray(beta, float), np.asarray(v, float), np.asarray(lo, float),
            np.asarray(hi, float), float(p), float(q), GAUSS_NODES, GAUSS_WEIGHTS, PANEL_WIDTH,
        )
    )


# ------------------------------------------------ solenoidal truncation


@njit
def _logistic(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@njit
def _cutoff_profile(r):
    """Radial cutoff h(r) = 1 - psi(r - 1) and its first two derivatives."""
    if r <= 1.0:
        return 1.0, 0.0, 0.0
    if r >= 2.0:
        return 0.0, 0.0, 0.0
    s = r - 1.0
    g = 1.0 / s - 1.0 / (1.0 - s)
    g1 = -1.0 / s**2 - 1.0 / (1.0 - s) ** 2
    g2 = 2.0 / s**3 - 2.0 / (1.0 - s) ** 3
    sig = _logistic(-g)
    d1 = sig * (1.0 - sig)
    d2 = d1 * (1.0 - 2.0 * sig)
    psi1 = -d1 * g1
    psi2 = d2 * g1 * g1 - d1 * g2
    return 1.0 - sig, -psi1, -psi2


@njit
def _bump_profile(r2):
    """exp(-1/(1 - r^2/4)) on |x| < 2 and d/d(r^2) of it."""
    if r2 >= 4.0:
        return 0.0, 0.0
    s = 1.0 - 0.25 * r2
    val = np.exp(-1.0 / s)
    return val, val * (-0.25) / (s * s)


@njit
def _ball_interval(p, d, r):
    """Interval of t with |p + t d| < r (empty when lo >= hi)."""
    A = 0.0
    B = 0.0
    C = -r * r
    for k in range(p.shape[0]):
        A += d[k] * d[k]
        B += 2.0 * p[k] * d[k]
        C += p[k] * p[k]
    disc = B * B - 4.0 * A * C
    if A == 0.0 or disc <= 0.0:
        return 1.0, 0.0
    root = np.sqrt(disc)
    return (-B - root) / (2.0 * A), (-B + root) / (2.0 * A)


@njit
def _solenoidal_quadrature(xs, ys, tn, tw, R, wnorm, kvec, ccoef, shift):
    P, n = xs.shape
    v = np.zeros((P, n))
    div = np.zeros(P)
    M = kvec.shape[0]
    a = np.zeros(n)
    b = np.zeros(n)
    phi = np.zeros(n)
    dphi = np.zeros(n)
    xy = np.zeros(n)
    negy = np.zeros(n)
    for ip in range(P):
        for iy in range(ys.shape[0]):
            for d in range(n):
                xy[d] = xs[ip, d] + ys[iy, d]
                negy[d] = -ys[iy, d]
            # t-support: omega_R needs |x + y - t y| < 2R, grad rho_R needs |x - t y| < 2R
            lo1, hi1 = _ball_interval(xy, negy, 2.0 * R)
            lo2, hi2 = _ball_interval(xs[ip], negy, 2.0 * R)
            lo = max(0.0, lo1, lo2)
            hi = min(1.0, hi1, hi2)
            if lo >= hi:
                continue
            span = hi - lo
            for it in range(tn.shape[0]):
                t = lo + span * tn[it]
                ra2 = 0.0
                rb2 = 0.0
                for d in range(n):
                    a[d] = (xs[ip, d] + (1.0 - t) * ys[iy, d]) / R
                    b[d] = (xs[ip, d] - t * ys[iy, d]) / R
                    ra2 += a[d] * a[d]
                    rb2 += b[d] * b[d]
                if ra2 >= 4.0 or rb2 <= 1.0 or rb2 >= 4.0:
                    continue
                om, om_r2 = _bump_profile(ra2)
                rb = np.sqrt(rb2)
                h0, h1, h2 = _cutoff_profile(rb)
                # trigonometric interpolant of phi and its derivative along y
                for d in range(n):
                    phi[d] = 0.0
                    dphi[d] = 0.0
                for m in range(M):
                    arg = 0.0
                    kdy = 0.0
                    for d in range(n):
                        arg += kvec[m, d] * (R * b[d] + shift)
                        kdy += kvec[m, d] * ys[iy, d]
                    c = np.cos(arg)
                    s = np.sin(arg)
                    for d in range(n):
                        re = ccoef[m, d].real
                        im = ccoef[m, d].imag
                        phi[d] += re * c - im * s
                        dphi[d] += -(re * s + im * c) * kdy
                # f = phi . grad rho_R with rho_R(x) = h(|x|/R)
                bdotphi = 0.0
                bdotdphi = 0.0
                bdoty = 0.0
                phidoty = 0.0
                ady = 0.0
                for d in range(n):
                    bdotphi += b[d] * phi[d]
                    bdotdphi += b[d] * dphi[d]
                    bdoty += b[d] * ys[iy, d]
                    phidoty += phi[d] * ys[iy, d]
                    ady += a[d] * ys[iy, d]
                fval = h1 / (R * rb) * bdotphi
                # y . grad f, using the Hessian of h(|x|/R)
                hess_term = (h2 - h1 / rb) / (R * R * rb2) * bdotphi * bdoty + h1 / (R * R * rb) * phidoty
                ydf = h1 / (R * rb) * bdotdphi + hess_term
                om_n = om * wnorm
                ydom = wnorm * om_r2 * 2.0 * ady / R
                w = tw[it] * span
                for d in range(n):
                    v[ip, d] += w * ys[iy, d] * om_n * fval
                div[ip] += w * (ydom * fval + om_n * ydf)
    return v, div


def solenoidal_quadrature_numba(xs, ys, tn, tw, R, wnorm, kvec, ccoef, shift):
    return _solenoidal_quadrature(
        np.ascontiguousarray(xs, float), np.ascontiguousarray(ys, float),
        np.asarray(tn, float), np.asarray(tw, float), float(R), float(wnorm),
        np.ascontiguousarray(kvec, float), np.ascontiguousarray(ccoef, complex), float(shift),
    )


def _cutoff_profile_numpy(r):
    h0 = np.where(r <= 1.0, 1.0, 0.0)
    h1 = np.zeros_like(r)
    h2 = np.zeros_like(r)
    inside = (r > 1.0) & (r < 2.0)
    s = r[inside] - 1.0
    g = 1.0 / s - 1.0 / (1.0 - s)
    g1 = -1.0 / s**2 - 1.0 / (1.0 - s) ** 2
    g2 = 2.0 / s**3 - 2.0 / (1.0 - s) ** 3
    sig = 0.5 * (1.0 + np.tanh(-0.5 * g))
    d1 = sig * (1.0 - sig)
    d2 = d1 * (1.0 - 2.0 * sig)
    h0[inside] = 1.0 - sig
    h1[inside] = d1 * g1
    h2[inside] = -(d2 * g1 * g1 - d1 * g2)
    return h0, h1, h2


def _ball_interval_numpy(p, d, r):
    A = np.sum(d * d, axis=-1)
    B = 2.0 * np.sum(p * d, axis=-1)
    C = np.sum(p * p, axis=-1) - r * r
    disc = B * B - 4.0 * A * C
    ok = (A > 0) & (disc > 0)
    root = np.sqrt(np.where(ok, disc, 0.0))
    A = np.where(ok, A, 1.0)
    return np.where(ok, (-B - root) / (2 * A), 1.0), np.where(ok, (-B + root) / (2 * A), 0.0)


def solenoidal_quadrature_numpy(xs, ys, tn, tw, R, wnorm, kvec, ccoef, shift):
    P, n = xs.shape
    v = np.zeros((P, n))
    div = np.zeros(P)
    for ip in range(P):
        x = xs[ip]
        lo1, hi1 = _ball_interval_numpy(x + ys, -ys, 2.0 * R)
        lo2, hi2 = _ball_interval_numpy(np.broadcast_to(x, ys.shape), -ys, 2.0 * R)
        lo = np.maximum(0.0, np.maximum(lo1, lo2))
        hi = np.minimum(1.0, np.minimum(hi1, hi2))
        use = lo < hi
        if not use.any():
            continue
        yy, lo, span = ys[use], lo[use], (hi - lo)[use]
        t = lo[:, None] + span[:, None] * tn[None, :]
        a = (x[None, None, :] + (1.0 - t)[..., None] * yy[:, None, :]) / R
        b = (x[None, None, :] - t[..., None] * yy[:, None, :]) / R
        ra2 = np.sum(a * a, axis=-1)
        rb2 = np.sum(b * b, axis=-1)
        live = (ra2 < 4.0) & (rb2 > 1.0) & (rb2 < 4.0)
        if not live.any():
            continue
        iy, it = np.nonzero(live)
        a, b, ra2, rb2 = a[live], b[live], ra2[live], rb2[live]
        y = yy[iy]
        s = 1.0 - 0.25 * ra2
        om = np.exp(-1.0 / s)
        om_r2 = om * (-0.25) / (s * s)
        rb = np.sqrt(rb2)
        _, h1, h2 = _cutoff_profile_numpy(rb)
        phase = np.exp(1j * ((R * b + shift) @ kvec.T))
        kdy = y @ kvec.T
        phi = (phase @ ccoef).real
        dphi = ((1j * kdy * phase) @ ccoef).real
        bdotphi = np.sum(b * phi, axis=1)
        bdotdphi = np.sum(b * dphi, axis=1)
        bdoty = np.sum(b * y, axis=1)
        phidoty = np.sum(phi * y, axis=1)
        fval = h1 / (R * rb) * bdotphi
        ydf = h1 / (R * rb) * bdotdphi + (h2 - h1 / rb) / (R * R * rb2) * bdotphi * bdoty + h1 / (R * R * rb) * phidoty
        ydom = wnorm * om_r2 * 2.0 * np.sum(a * y, axis=1) / R
        w = tw[it] * span[iy]
        v[ip] = np.sum((w * om * wnorm * fval)[:, None] * y, axis=0)
        div[ip] = np.sum(w * (ydom * fval + om * wnorm * ydf))
    return v, div


KERNELS = {
    "convolve_offsets": {"numpy": convolve_offsets_numpy, "numba": convolve_offsets_numba},
    "double_star_segments": {"numpy": double_star_segments_numpy, "numba": double_star_segments_numba},
    "solenoidal_quadrature": {"numpy": solenoidal_quadrature_numpy, "numba": solenoidal_quadrature_numba},
}

_ACTIVE = "numba" if USE_NUMBA else "numpy"
convolve_offsets = KERNELS["convolve_offsets"][_ACTIVE]
double_star_segments = KERNELS["double_star_segments"][_ACTIVE]
solenoidal_quadrature = KERNELS["solenoidal_quadrature"][_ACTIVE]
