"""Azimuthal Fourier coefficients of Laplace and Helmholtz layer kernels.

For a rotationally invariant kernel k(x, x') the coefficient of mode n is

    k_n(r, z, r', z') = int_T e^{-in theta} k(theta) d theta / sqrt(2 pi)

with the source at azimuth 0 and the target at azimuth theta (see
:mod:`axibie.constants`). All kernels here are even in theta, so k_n = k_{-n}
and only n >= 0 is computed.

Three evaluation paths are provided:

* ``recursion``: Laplace kernels in closed form through Q_{n-1/2}(chi);
  valid arbitrarily close to the diagonal.
* ``convolution``: Helmholtz kernels as (Laplace kernel) x (smooth factor);
  the coefficients are a discrete convolution of the two sequences.
* ``fft``: trapezoidal sampling of the full kernel in theta; accurate only
  for well-separated pairs.

The vectorized ``*_coeffs`` functions take broadcastable arrays of target
and source coordinates and return an array whose last axis is n = 0..n_max.
The ``*_modal`` functions wrap them for a single pair and return a
:class:`ModalKernelSequence` covering n = -N..N.
"""

from dataclasses import dataclass
import math

import numpy as np

from .constants import INV_4PI, INV_SQRT_2PI, SQRT_2PI, SQRT_8PI3
from .errors import AxisDegenerateError, ConfigError, DomainError, ResolutionError
from .specfun import chi_from_coords, chi_minus_1_raw, legendre_q_raw

LAPLACE_KINDS = ("laplace_single", "laplace_double_interior", "laplace_double_exterior")
HELMHOLTZ_KINDS = ("helmholtz_single", "helmholtz_double", "helmholtz_combined", "greens_phi_k")
KERNEL_KINDS = LAPLACE_KINDS + HELMHOLTZ_KINDS

_CHI_FLOOR = 1e-300
_SMOOTH_TAIL = 1e-16
# smooth factors count as resolved once the top sixteenth of their spectrum is below this
_SMOOTH_TAIL_CHECK = 1e-13
FFT_AUDIT_TOL = 1e-11


@dataclass(frozen=True)
class ModalKernelSequence:
    """Fourier coefficients k_n, n = -N..N, of one kernel at one (target, source) pair."""

    target: tuple
    source: tuple
    normal: tuple | None
    values: np.ndarray
    kernel_kind: str
    path_tag: str

    @property
    def n_max(self):
        return (self.values.size - 1) // 2

    @property
    def modes(self):
        return np.arange(-self.n_max, self.n_max + 1)

    def at(self, n):
        return self.values[n + self.n_max]

    @property
    def nonnegative(self):
        return self.values[self.n_max:]


def _symmetric(half):
    """Extend n = 0..N to n = -N..N by evenness."""
    return np.concatenate([half[..., :0:-1], half], axis=-1)


# -- Laplace, recursion path ------------------------------------------------------

def _prefactor(r, rs):
    return 1.0 / (SQRT_8PI3 * np.sqrt(r * rs))


def _separation(r, z, rs, zs, sep):
    """(r' - r, z' - z), taken from ``sep`` when the caller has it more accurately."""
    if sep is None:
        return rs - r, zs - z
    dr, dz = sep
    return np.broadcast_to(dr, r.shape), np.broadcast_to(dz, r.shape)


def _cm1(r, rs, dr, dz):
    return np.maximum((dr * dr + dz * dz) / (2.0 * r * rs), _CHI_FLOOR)


def laplace_single_coeffs(r, z, rs, zs, n_max, sep=None):
    """s_n = Q_{n-1/2}(chi) / sqrt(8 pi^3 r r'), n = 0..n_max.

    ``sep`` optionally supplies the separation (r' - r, z' - z); near the
    diagonal a value integrated along the curve is far more accurate than
    the difference of rounded coordinates.
    """
    r, z, rs, zs = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (r, z, rs, zs)))
    dr, dz = _separation(r, z, rs, zs, sep)
    cm1 = _cm1(r, rs, dr, dz)
    q, _, _ = legendre_q_raw(cm1, n_max)
    return q * _prefactor(r, rs)[..., None]


def laplace_double_coeffs(r, z, rs, zs, nrs, nzs, n_max, return_single=False, sep=None):
    """d_n^(i): coefficients of n(x').(x - x') / (4 pi |x - x'|^3).

    This is the normal derivative of s_n with respect to the source point,
    d_n = [Q' (n'.grad' chi) - n_r' Q / (2 r')] / sqrt(8 pi^3 r r').
    """
    arrs = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (r, z, rs, zs, nrs, nzs)))
    r, z, rs, zs, nrs, nzs = arrs
    dr, dz = _separation(r, z, rs, zs, sep)
    cm1 = _cm1(r, rs, dr, dz)
    q, dq, _ = legendre_q_raw(cm1, n_max, want_derivs=True)
    # n'.grad' chi with grad' chi = ((r'^2 - r^2 - dz^2)/(2 r r'^2), (z' - z)/(r r')),
    # rearranged as [2 n'.(x' - x) - n_r' |x' - x|^2 / r'] / (2 r r')
    ndchi = (2.0 * (nrs * dr + nzs * dz) - nrs * (dr * dr + dz * dz) / rs) / (2.0 * r * rs)
    pre = _prefactor(r, rs)[..., None]
    d = (dq * ndchi[..., None] - q * (nrs / (2.0 * rs))[..., None]) * pre
    if return_single:
        return d, q * pre
    return d


def monopole_coeffs(r, z, x0, n_max):
    """Coefficients of 1/(4 pi |x - x0|) for an on-axis point x0 = (0, z0): only n = 0."""
    r0, z0 = x0
    if r0 != 0.0:
        raise ConfigError("the auxiliary monopole must lie on the symmetry axis")
    r, z = np.broadcast_arrays(np.asarray(r, float), np.asarray(z, float))
    out = np.zeros(r.shape + (n_max + 1,))
    out[..., 0] = SQRT_2PI * INV_4PI / np.hypot(r, z - z0)
    return out


def laplace_double_exterior_coeffs(r, z, rs, zs, nrs, nzs, x0, n_max):
    """d_n^(e) = -d_n^(i) + coefficients of 1/(4 pi |x - x0|)."""
    return -laplace_double_coeffs(r, z, rs, zs, nrs, nzs, n_max) + monopole_coeffs(r, z, x0, n_max)


# -- smooth factors and convolution ---------------------------------------------------

def _f3(x, sx=None, cx=None):
    """(sin x - x cos x) / x^3, with its Taylor series near 0.

    ``sx`` and ``cx`` may pass sin x and cos x when already computed.
    """
    x = np.asarray(x, dtype=float)
    sx = np.sin(x) if sx is None else sx
    cx = np.cos(x) if cx is None else cx
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (sx - x * cx) / (x * x * x)
    small = np.abs(x) < 0.1
    if np.any(small):
        xs = x[small] ** 2
        out[small] = 1.0 / 3.0 - xs / 30.0 + xs * xs / 840.0 - xs ** 3 / 45360.0
    return out


def _sinc(x, sx=None):
    """sin x / x (``sx`` may pass sin x)."""
    x = np.asarray(x, dtype=float)
    sx = np.sin(x) if sx is None else sx
    with np.errstate(divide="ignore", invalid="ignore"):
        out = sx / x
    small = np.abs(x) < 1e-4
    if np.any(small):
        xs = x[small] ** 2
        out[small] = 1.0 - xs / 6.0 + xs * xs / 120.0
    return out


def _pow2(m):
    return 1 << int(math.ceil(math.log2(max(int(m), 2))))


def fourier_coeffs(samples, n_max):
    """g_n, n = 0..n_max, from M uniform samples of an even 2 pi-periodic function.

    Trapezoid rule, g_n = (sqrt(2 pi) / M) sum_m g(theta_m) e^{-in theta_m}.
    Real and imaginary parts are transformed separately; since the function
    is even its coefficients are the real parts of each transform.
    """
    samples = np.asarray(samples)
    M = samples.shape[-1]
    if np.iscomplexobj(samples):
        re = np.fft.rfft(samples.real, axis=-1)[..., : n_max + 1].real
        im = np.fft.rfft(samples.imag, axis=-1)[..., : n_max + 1].real
        out = re + 1j * im
    else:
        out = np.fft.rfft(samples, axis=-1)[..., : n_max + 1].real
    return out * (SQRT_2PI / M)


def smooth_part_modal(g, n_max, oversample=4, tail_tol=1e-13):
    """Fourier coefficients g_n, |n| <= n_max, of a smooth periodic function.

    ``g`` maps an array of angles to values. Sampled at
    M = oversample * (2 n_max + 1) points rounded up to a power of two.
    Raises :class:`ResolutionError` when the coefficients near n_max are
    not negligible.
    """
    M = _pow2(oversample * (2 * n_max + 1))
    theta = 2.0 * np.pi * np.arange(M) / M
    vals = np.asarray(g(theta))
    if np.iscomplexobj(vals):
        full = np.fft.fft(vals) * (SQRT_2PI / M)
    else:
        full = np.fft.fft(vals.astype(float)) * (SQRT_2PI / M)
    idx = np.arange(-n_max, n_max + 1) % M
    coef = full[idx]
    if not np.iscomplexobj(vals):
        coef = coef.real
    peak = np.max(np.abs(full))
    edge = max(1, n_max // 8)
    tail = np.max(np.abs(np.concatenate([full[n_max - edge + 1: n_max + 1], full[M - n_max: M - n_max + edge]])))
    if peak > 0 and n_max > 0 and tail > tail_tol * peak:
        raise ResolutionError(f"smooth factor not resolved at n_max={n_max} (tail {tail / peak:.2e})")
    return coef


def product_modal(singular_modal, smooth_modal, n_max, method="direct"):
    """Coefficients of a product of two functions from those of the factors.

    f_n = (1/sqrt(2 pi)) sum_k s_k g_{n-k}. Both inputs are symmetric
    arrays centred on n = 0 (lengths 2 P + 1 and 2 G + 1); the output covers
    |n| <= n_max and is exact provided P >= n_max + G.

    ``method='direct'`` sums the short smooth factor explicitly, which keeps
    small coefficients accurate to their own size; ``method='fft'`` uses a
    zero-padded transform, pointwise product and inverse transform.
    """
    s = np.asarray(singular_modal)
    g = np.asarray(smooth_modal)
    P = (s.shape[-1] - 1) // 2
    G = (g.shape[-1] - 1) // 2
    if P < n_max:
        raise DomainError("singular factor does not cover |n| <= n_max")
    if method == "fft":
        length = _pow2(s.shape[-1] + g.shape[-1] - 1)
        prod = np.fft.ifft(np.fft.fft(s, length, axis=-1) * np.fft.fft(g, length, axis=-1), axis=-1)
        # linear convolution index c corresponds to mode c - P - G
        full = prod[..., P + G - n_max: P + G + n_max + 1]
        if not (np.iscomplexobj(s) or np.iscomplexobj(g)):
            full = full.real
        return full * INV_SQRT_2PI
    if method != "direct":
        raise ConfigError(f"unknown convolution method {method!r}")
    out_dtype = np.result_type(s, g)
    out = np.zeros(np.broadcast_shapes(s.shape[:-1], g.shape[:-1]) + (2 * n_max + 1,), dtype=out_dtype)
    for m in range(-G, G + 1):
        # term g_m s_{n-m} for n = -n_max..n_max
        lo = P - n_max - m
        hi = P + n_max - m + 1
        if lo < 0 or hi > s.shape[-1]:
            seg = np.zeros(s.shape[:-1] + (2 * n_max + 1,), dtype=s.dtype)
            a = max(lo, 0)
            b = min(hi, s.shape[-1])
            if b > a:
                seg[..., a - lo: b - lo] = s[..., a:b]
        else:
            seg = s[..., lo:hi]
        out += g[..., m + G, None] * seg
    return out * INV_SQRT_2PI


def _half_product(s_half, g_half, n_max):
    """Convolution for even sequences stored as n >= 0 halves (vectorized).

    f_n = (1/sqrt(2 pi)) [g_0 s_n + sum_{m>=1} g_m (s_{|n-m|} + s_{n+m})];
    ``s_half`` must extend to n_max + G.
    """
    G = g_half.shape[-1] - 1
    shape = np.broadcast_shapes(s_half.shape[:-1], g_half.shape[:-1]) + (n_max + 1,)
    out = np.zeros(shape, dtype=np.result_type(s_half, g_half))
    out += g_half[..., 0, None] * s_half[..., : n_max + 1]
    for m in range(1, G + 1):
        gm = g_half[..., m, None]
        out += gm * s_half[..., m: m + n_max + 1]
        # s_{|n - m|}: reversed for n < m, shifted for n >= m
        a = min(m, n_max + 1)
        out[..., :a] += gm * s_half[..., m - a + 1: m + 1][..., ::-1]
        if n_max >= m:
            out[..., m:] += gm * s_half[..., : n_max - m + 1]
    return out * INV_SQRT_2PI


def _fit(c, n_max):
    """Truncate or zero-pad the last axis to n = 0..n_max."""
    if c.shape[-1] > n_max:
        return c[..., : n_max + 1]
    return np.pad(c, [(0, 0)] * (c.ndim - 1) + [(0, n_max + 1 - c.shape[-1])])


def _normal_dot(r, z, rs, zs, nrs, nzs, theta, sep=None):
    """n(x').(x - x') with x' at azimuth theta; r cos(theta) - r' formed without cancellation."""
    dr, dz = _separation(r, z, rs, zs, sep)
    st = np.sin(0.5 * theta)
    radial = -dr[..., None] - 2.0 * r[..., None] * st * st
    return np.asarray(nrs)[..., None] * radial - (np.asarray(nzs) * dz)[..., None]


def _pair_geometry(r, z, rs, zs, theta, sep=None):
    """R^2(theta), broadcast over theta."""
    dr, dz = _separation(r, z, rs, zs, sep)
    d2 = dr * dr + dz * dz
    st = np.sin(0.5 * theta)
    return d2[..., None] + 4.0 * (r * rs)[..., None] * st * st


def _smooth_band(k, r, rs):
    """Rough bandwidth (in modes) of cos(kR(theta)) and its relatives."""
    return float(k) * float(np.sqrt(np.max(r * rs))) if np.size(r) else 0.0


def helmholtz_smooth_factors(k, r, z, rs, zs, nrs=None, nzs=None, want_double=False, sep=None):
    """Coefficients (n >= 0) of the smooth factors of the Helmholtz kernels.

    Returns a dict with

    * ``single_cos``: cos kR  (multiplies 1/(4 pi R))
    * ``single_sinc``: i k sinc(kR) / (4 pi)  (smooth remainder of the single layer)
    * ``double_cos``: cos kR + kR sin kR  (multiplies the Laplace double layer)
    * ``double_rem``: i k^3 f3(kR) n'.(x - x') / (4 pi)

    Splitting e^{ikR} into even and odd functions of R leaves factors that are
    entire functions of R^2, hence smooth in theta even at coincidence.
    """
    r, z, rs, zs = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (r, z, rs, zs)))
    band = _smooth_band(k, r, rs)
    M = _pow2(4 * (band + 24))
    if want_double:
        nrs_b = np.broadcast_to(np.asarray(nrs, float), r.shape)
        nzs_b = np.broadcast_to(np.asarray(nzs, float), r.shape)
    for _ in range(8):
        theta = 2.0 * np.pi * np.arange(M) / M
        kR = k * np.sqrt(_pair_geometry(r, z, rs, zs, theta, sep))
        ckr = np.cos(kR)
        skr = np.sin(kR)
        # all samples are real; the factor i is applied to the coefficients
        samples = {"single_cos": ckr, "single_sinc": (k * INV_4PI) * _sinc(kR, skr)}
        if want_double:
            ndx = _normal_dot(r, z, rs, zs, nrs_b, nzs_b, theta, sep)
            samples["double_cos"] = ckr + kR * skr
            samples["double_rem"] = (k ** 3 * INV_4PI) * _f3(kR, skr, ckr) * ndx
        coefs = {name: fourier_coeffs(v, M // 2) for name, v in samples.items()}
        ok = True
        for c in coefs.values():
            peak = np.max(np.abs(c))
            tail = np.max(np.abs(c[..., -(M // 16):]))
            if peak > 0 and tail > _SMOOTH_TAIL_CHECK * peak:
                ok = False
        if ok:
            coefs["single_sinc"] = 1j * coefs["single_sinc"]
            if want_double:
                coefs["double_rem"] = 1j * coefs["double_rem"]
            return coefs
        M *= 2
    raise ResolutionError("Helmholtz smooth factor not resolved")


def _trim(c, rel=_SMOOTH_TAIL):
    """Drop trailing coefficients that are below rel * max or at the rounding noise level.

    The noise level is read off the top sixteenth of the spectrum, which
    the resolution check has certified to be small.
    """
    mag = np.max(np.abs(c.reshape(-1, c.shape[-1])), axis=0) if c.ndim > 1 else np.abs(c)
    peak = np.max(mag)
    if peak == 0:
        return c[..., :1]
    noise = np.max(mag[-max(1, mag.size // 8):])
    keep = np.flatnonzero(mag > max(rel * peak, 2.0 * noise))
    return c[..., : keep[-1] + 1]


def helmholtz_coeffs(kind, k, r, z, rs, zs, nrs=None, nzs=None, n_max=0, nu=None, sep=None):
    """Helmholtz modal kernels by the convolution path, n = 0..n_max.

    ``kind`` is ``single``, ``double`` or ``combined`` (double - i nu single).
    """
    if kind not in ("single", "double", "combined"):
        raise ConfigError(f"unknown Helmholtz kind {kind!r}")
    k = float(k)
    if k < 0:
        raise DomainError("wavenumber must be nonnegative")
    if nu is None:
        nu = k
    r, z, rs, zs = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (r, z, rs, zs)))
    want_double = kind != "single"
    if k == 0.0:
        out = np.zeros(r.shape + (n_max + 1,), dtype=complex)
        if kind in ("single", "combined"):
            s = laplace_single_coeffs(r, z, rs, zs, n_max, sep=sep)
            out += s if kind == "single" else -1j * nu * s
        if want_double:
            out += laplace_double_coeffs(r, z, rs, zs, nrs, nzs, n_max, sep=sep)
        return out
    f = helmholtz_smooth_factors(k, r, z, rs, zs, nrs, nzs, want_double=want_double, sep=sep)
    gc = _trim(f["single_cos"])
    G = gc.shape[-1] - 1
    if want_double:
        gd = _trim(f["double_cos"])
        G = max(G, gd.shape[-1] - 1)
    top = n_max + G
    if want_double:
        d_top, s_top = laplace_double_coeffs(r, z, rs, zs, nrs, nzs, top, return_single=True, sep=sep)
    else:
        s_top = laplace_single_coeffs(r, z, rs, zs, top, sep=sep)
    out = np.zeros(r.shape + (n_max + 1,), dtype=complex)
    if kind in ("single", "combined"):
        single = _half_product(s_top, gc, n_max) + _fit(f["single_sinc"], n_max)
        out += single if kind == "single" else -1j * nu * single
    if want_double:
        out += _half_product(d_top, gd, n_max) + _fit(f["double_rem"], n_max)
    return out


# -- full kernels sampled in theta (FFT path) ----------------------------------------

def kernel_samples(kind, r, z, rs, zs, nrs, nzs, theta, k=0.0, nu=None, x0=None):
    """Full 3-D kernel at target azimuth theta, source at azimuth 0."""
    r, z, rs, zs = (np.asarray(a, dtype=float) for a in (r, z, rs, zs))
    R2 = _pair_geometry(r, z, rs, zs, theta)
    R = np.sqrt(R2)
    if kind in ("laplace_single",):
        return INV_4PI / R
    ndx = None
    if kind != "helmholtz_single" and kind != "greens_phi_k":
        ndx = _normal_dot(r, z, rs, zs, nrs, nzs, theta)
    if kind == "laplace_double_interior":
        return INV_4PI * ndx / (R2 * R)
    if kind == "laplace_double_exterior":
        r0, z0 = x0
        if r0 != 0.0:
            raise ConfigError("the auxiliary monopole must lie on the symmetry axis")
        mono = INV_4PI / np.hypot(r, z - z0)
        return -INV_4PI * ndx / (R2 * R) + mono[..., None]
    k = float(k)
    nu = k if nu is None else nu
    phase = np.exp(1j * k * R)
    single = INV_4PI * phase / R
    if kind in ("helmholtz_single", "greens_phi_k"):
        return single
    double = INV_4PI * ndx / (R2 * R) * (1.0 - 1j * k * R) * phase
    if kind == "helmholtz_double":
        return double
    if kind == "helmholtz_combined":
        return double - 1j * nu * single
    raise ConfigError(f"unknown kernel kind {kind!r}")


FFT_MAX_SAMPLES = 1 << 16


def fft_size(n_max, eta_min, k=0.0, r_max=0.0, oversample=4):
    """Sample count for the FFT path: aliasing below e^{-40} for the given separation."""
    need = oversample * (2 * n_max + 1)
    if eta_min > 0:
        need = max(need, n_max + 40.0 / eta_min + (2.0 * k * r_max + 32 if k > 0 else 0))
    return _pow2(need)


def fft_coeffs(kind, r, z, rs, zs, nrs=None, nzs=None, n_max=0, M=None, k=0.0, nu=None, x0=None):
    """Trapezoidal coefficients n = 0..n_max of the sampled kernel (vectorized)."""
    r, z, rs, zs = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (r, z, rs, zs)))
    if nrs is not None:
        nrs, nzs = (np.broadcast_to(np.asarray(a, float), r.shape) for a in (nrs, nzs))
    if M is None:
        cm1 = chi_minus_1_raw(r, z, rs, zs)
        eta = float(np.min(np.log1p(cm1 + np.sqrt(cm1 * (cm1 + 2.0)))))
        M = fft_size(n_max, eta, k, float(max(np.max(r), np.max(rs))))
    theta = 2.0 * np.pi * np.arange(M) / M
    vals = kernel_samples(kind, r, z, rs, zs, nrs, nzs, theta, k=k, nu=nu, x0=x0)
    return fourier_coeffs(vals, n_max), M


# -- single-pair API ---------------------------------------------------------------------

def _check_pair(target, source):
    r, z = map(float, target)
    rs, zs = map(float, source)
    if r <= 0 or rs <= 0:
        raise AxisDegenerateError("modal kernels need r > 0 and r' > 0")
    chi_from_coords(r, z, rs, zs)
    return r, z, rs, zs


def _wrap(target, source, normal, half, kind, path):
    return ModalKernelSequence(target=tuple(map(float, target)), source=tuple(map(float, source)),
                               normal=None if normal is None else tuple(map(float, normal)),
                               values=_symmetric(np.asarray(half)), kernel_kind=kind, path_tag=path)


def laplace_single_modal(target, source, n_max):
    r, z, rs, zs = _check_pair(target, source)
    return _wrap(target, source, None, laplace_single_coeffs(r, z, rs, zs, n_max), "laplace_single", "recursion")


def laplace_double_modal_interior(target, source, normal, n_max):
    r, z, rs, zs = _check_pair(target, source)
    half = laplace_double_coeffs(r, z, rs, zs, normal[0], normal[1], n_max)
    return _wrap(target, source, normal, half, "laplace_double_interior", "recursion")


def laplace_double_modal_exterior(target, source, normal, x0, n_max):
    r, z, rs, zs = _check_pair(target, source)
    half = laplace_double_exterior_coeffs(r, z, rs, zs, normal[0], normal[1], x0, n_max)
    return _wrap(target, source, normal, half, "laplace_double_exterior", "recursion")


def helmholtz_modal(kind, wavenumber, target, source, normal=None, n_max=0, coupling=None):
    """Helmholtz single, double or combined-field modal kernel (convolution path)."""
    r, z, rs, zs = _check_pair(target, source)
    if kind != "single" and normal is None:
        raise ConfigError("double-layer kinds need a source normal")
    if kind == "combined" and coupling is not None and coupling <= 0:
        raise ConfigError("coupling must be positive")
    nrs, nzs = (None, None) if normal is None else normal
    half = helmholtz_coeffs(kind, wavenumber, r, z, rs, zs, nrs, nzs, n_max, nu=coupling)
    path = "recursion" if wavenumber == 0 else "convolution"
    return _wrap(target, source, normal, half, "helmholtz_" + kind, path)


def greens_modal(wavenumber, target, source, n_max):
    """phi_n^(k): coefficients of the free-space Green's function e^{ik|x|}/(4 pi |x|)."""
    seq = helmholtz_modal("single", wavenumber, target, source, None, n_max)
    return ModalKernelSequence(seq.target, seq.source, None, seq.values, "greens_phi_k", seq.path_tag)


def modal_kernels_fft(kernel_kind, target, source, normal=None, n_max=0, oversample=4,
                      wavenumber=0.0, coupling=None, x0=None, audit=True):
    """Kernel coefficients by sampling in theta and one FFT.

    The length follows :func:`fft_size` for the pair's separation; pairs
    needing more than ``FFT_MAX_SAMPLES`` points go straight to the
    recursion path. A peakedness guard then compares against a 2M-point transform; if the two
    disagree by more than 1e-11 relative the pair is handed to the
    recursion/convolution path instead (``path_tag`` reports which was used).
    """
    if kernel_kind not in KERNEL_KINDS:
        raise ConfigError(f"unknown kernel kind {kernel_kind!r}")
    r, z, rs, zs = _check_pair(target, source)
    nrs, nzs = (None, None) if normal is None else map(float, normal)
    cm1 = float(chi_minus_1_raw(r, z, rs, zs))
    eta = math.log1p(cm1 + math.sqrt(cm1 * (cm1 + 2.0)))
    M = fft_size(n_max, eta, wavenumber, max(r, rs), oversample)
    if M > FFT_MAX_SAMPLES:
        # too peaked to sample economically
        return modal_kernel(kernel_kind, target, source, normal, n_max, wavenumber, coupling, x0)
    half, _ = fft_coeffs(kernel_kind, r, z, rs, zs, nrs, nzs, n_max, M=M, k=wavenumber, nu=coupling, x0=x0)
    path = "fft"
    if audit:
        ref, _ = fft_coeffs(kernel_kind, r, z, rs, zs, nrs, nzs, n_max, M=2 * M, k=wavenumber, nu=coupling, x0=x0)
        if np.max(np.abs(ref - half)) > FFT_AUDIT_TOL * max(np.max(np.abs(ref)), 1e-300):
            return modal_kernel(kernel_kind, target, source, normal, n_max, wavenumber, coupling, x0)
    return _wrap(target, source, normal, half, kernel_kind, path)


def modal_kernel(kernel_kind, target, source, normal=None, n_max=0, wavenumber=0.0, coupling=None, x0=None):
    """Dispatch to the recursion/convolution path for any kernel kind."""
    if kernel_kind == "laplace_single":
        return laplace_single_modal(target, source, n_max)
    if kernel_kind == "laplace_double_interior":
        return laplace_double_modal_interior(target, source, normal, n_max)
    if kernel_kind == "laplace_double_exterior":
        return laplace_double_modal_exterior(target, source, normal, x0, n_max)
    if kernel_kind == "greens_phi_k":
        return greens_modal(wavenumber, target, source, n_max)
    if kernel_kind in HELMHOLTZ_KINDS:
        return helmholtz_modal(kernel_kind.split("_")[1], wavenumber, target, source, normal, n_max, coupling)
    raise ConfigError(f"unknown kernel kind {kernel_kind!r}")


# -- kernels as used by the assembler ---------------------------------------------------------

@dataclass(frozen=True)
class LayerKernel:
    """A boundary-integral kernel with both evaluation paths.

    ``kind`` is one of :data:`KERNEL_KINDS`. For the exterior Laplace kind
    the monopole at ``x0`` is independent of the source point, so assembly
    adds it as a separate rank-one term; :meth:`near_coeffs` and
    :meth:`samples` here cover the source-dependent part only when
    ``split_monopole`` is set.
    """

    kind: str
    wavenumber: float = 0.0
    coupling: float | None = None
    x0: tuple | None = None
    split_monopole: bool = True

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "laplace_double_exterior" and self.x0 is None:
            raise ConfigError("exterior Laplace kernel needs an auxiliary point x0")

    @property
    def is_complex(self):
        return self.kind in HELMHOLTZ_KINDS

    @property
    def dtype(self):
        return complex if self.is_complex else float

    @property
    def nu(self):
        return self.wavenumber if self.coupling is None else self.coupling

    def near_coeffs(self, r, z, rs, zs, nrs, nzs, n_max, sep=None):
        """Recursion/convolution path, n = 0..n_max."""
        kind = self.kind
        if kind == "laplace_single":
            return laplace_single_coeffs(r, z, rs, zs, n_max, sep=sep)
        if kind == "laplace_double_interior":
            return laplace_double_coeffs(r, z, rs, zs, nrs, nzs, n_max, sep=sep)
        if kind == "laplace_double_exterior":
            d = -laplace_double_coeffs(r, z, rs, zs, nrs, nzs, n_max, sep=sep)
            if not self.split_monopole:
                d = d + monopole_coeffs(np.broadcast_to(r, d.shape[:-1]), np.broadcast_to(z, d.shape[:-1]), self.x0, n_max)
            return d
        hk = "single" if kind in ("helmholtz_single", "greens_phi_k") else kind.split("_")[1]
        return helmholtz_coeffs(hk, self.wavenumber, r, z, rs, zs, nrs, nzs, n_max, nu=self.nu, sep=sep)

    def samples(self, r, z, rs, zs, nrs, nzs, theta):
        kind = self.kind
        if kind == "laplace_double_exterior" and self.split_monopole:
            return -kernel_samples("laplace_double_interior", r, z, rs, zs, nrs, nzs, theta)
        return kernel_samples(kind, r, z, rs, zs, nrs, nzs, theta, k=self.wavenumber, nu=self.nu, x0=self.x0)
