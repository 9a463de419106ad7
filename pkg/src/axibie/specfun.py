"""Complete elliptic integrals and half-integer Legendre functions of the second kind.

Conventions
-----------
Elliptic integrals use the *modulus* ``mu``::

    K(mu) = int_0^{pi/2} (1 - mu^2 sin^2 t)^(-1/2) dt
    E(mu) = int_0^{pi/2} (1 - mu^2 sin^2 t)^(+1/2) dt

so that ``Q_{-1/2}(chi) = mu K(mu)`` with ``mu = sqrt(2/(chi+1))``.
(scipy.special.ellipk takes the *parameter* mu^2; do not mix them up.)

Every routine accepts the complementary modulus ``mu_c = sqrt(1 - mu^2)``
directly. Near the log singularity of the kernels ``chi -> 1`` the modulus
is within rounding of 1 and only ``mu_c``, formed from ``chi - 1``, keeps
full relative precision.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import AxisDegenerateError, DiagonalEvaluationError, DomainError, EllipticDivergence

_AGM_ITERATIONS = 12  # quadratic convergence; 12 steps suffice for mu_c >= 1e-300

# digit-loss budget for forward recursion: exp(2 n eta) <= 100
FORWARD_LOSS_BUDGET = math.log(100.0)
MILLER_TOL = 1e-13
MILLER_MIN_OFFSET = 10
MILLER_DAMPING = 20.0
_SCALAR_BATCH = 4  # below this many points the recursions run on Python floats


def _agm_KE(mu, mu_c):
    """K and E from the arithmetic-geometric mean of (1, mu_c).

    Vectorized, no validation. ``mu_c == 0`` yields K = inf and E = 1.
    """
    mu = np.asarray(mu, dtype=float)
    mu_c = np.asarray(mu_c, dtype=float)
    a = np.ones(np.broadcast(mu, mu_c).shape)
    b = np.broadcast_to(mu_c, a.shape).copy()
    c = np.broadcast_to(mu, a.shape).copy()
    acc = 0.5 * c * c
    scale = 0.5
    for _ in range(_AGM_ITERATIONS):
        a_next = 0.5 * (a + b)
        b = np.sqrt(a * b)
        # c_{n+1} = (a_n - b_n)/2 without cancellation
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(a_next > 0, c * c / (4.0 * a_next), 0.0)
        a = a_next
        scale *= 2.0
        acc = acc + scale * c * c
    with np.errstate(divide="ignore"):
        K = np.pi / (2.0 * a)
    with np.errstate(invalid="ignore"):
        E = np.where(mu_c == 0.0, 1.0, K * (1.0 - acc))
    return K, E


def _prepare(mu, mu_c):
    mu = np.asarray(mu, dtype=float)
    if mu_c is None:
        mu_c = np.sqrt(np.maximum((1.0 - mu) * (1.0 + mu), 0.0))
    else:
        mu_c = np.asarray(mu_c, dtype=float)
    return mu, mu_c


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


def elliptic_K(mu, mu_c=None):
    """Complete elliptic integral of the first kind, modulus convention.

    Raises :class:`EllipticDivergence` at ``mu == 1`` and
    :class:`DomainError` outside ``[0, 1)``.
    """
    mu, mu_c = _prepare(mu, mu_c)
    if np.any(~np.isfinite(mu)) or np.any(mu < 0) or np.any(mu > 1):
        raise DomainError("elliptic_K requires 0 <= mu < 1")
    if np.any(mu_c == 0):
        raise EllipticDivergence("K(mu) diverges at mu = 1")
    K, _ = _agm_KE(mu, mu_c)
    return _scalar_or_array(K, mu)


def elliptic_E(mu, mu_c=None):
    """Complete elliptic integral of the second kind, modulus convention."""
    mu, mu_c = _prepare(mu, mu_c)
    if np.any(~np.isfinite(mu)) or np.any(mu < 0) or np.any(mu > 1):
        raise DomainError("elliptic_E requires 0 <= mu <= 1")
    _, E = _agm_KE(mu, mu_c)
    return _scalar_or_array(E, mu)


@dataclass(frozen=True)
class ChiArgument:
    """Separation parameter chi = 1 + chi_minus_1 (scalars or equal-shape arrays)."""

    chi: np.ndarray
    chi_minus_1: np.ndarray

    @classmethod
    def from_chi_minus_1(cls, chi_minus_1):
        cm1 = np.asarray(chi_minus_1, dtype=float)
        if np.any(~(cm1 > 0)):
            raise DomainError("chi - 1 must be positive")
        return cls(chi=1.0 + cm1, chi_minus_1=cm1)

    @classmethod
    def from_chi(cls, chi):
        chi = np.asarray(chi, dtype=float)
        return cls.from_chi_minus_1(chi - 1.0)

    @property
    def mu(self):
        return np.sqrt(2.0 / (self.chi + 1.0))

    @property
    def mu_c(self):
        return np.sqrt(self.chi_minus_1 / (self.chi + 1.0))

    @property
    def eta(self):
        """acosh(chi), formed from chi - 1."""
        cm1 = self.chi_minus_1
        return np.log1p(cm1 + np.sqrt(cm1 * (cm1 + 2.0)))


def chi_minus_1_raw(r, z, r_src, z_src):
    """Cancellation-free chi - 1 without validation (vectorized)."""
    dr = r - r_src
    dz = z - z_src
    return (dr * dr + dz * dz) / (2.0 * r * r_src)


def chi_from_coords(r, z, r_src, z_src):
    """Build :class:`ChiArgument` for a target (r, z) and a source (r_src, z_src)."""
    r = np.asarray(r, dtype=float)
    r_src = np.asarray(r_src, dtype=float)
    if np.any(r <= 0) or np.any(r_src <= 0):
        raise AxisDegenerateError("chi is undefined for points on the symmetry axis")
    cm1 = chi_minus_1_raw(r, np.asarray(z, float), r_src, np.asarray(z_src, float))
    if np.any(cm1 <= 0):
        raise DiagonalEvaluationError("coincident target and source points")
    return ChiArgument(chi=1.0 + cm1, chi_minus_1=cm1)


@dataclass(frozen=True)
class LegendreQSequence:
    """Q_{n-1/2}(chi) for n = 0..n_max along the last axis.

    ``backward`` flags entries computed by Miller's algorithm; the others
    used forward recursion from the elliptic-integral seeds.
    """

    values: np.ndarray
    derivs: np.ndarray | None
    backward: np.ndarray

    @property
    def n_max(self):
        return self.values.shape[-1] - 1

    @property
    def method_tag(self):
        if np.all(self.backward):
            return "backward"
        if not np.any(self.backward):
            return "forward"
        return "mixed"

    def at(self, n):
        """Value at integer n; negative orders read from |n|."""
        return self.values[..., abs(n)]


def _seeds(cm1):
    """Q_{-1/2}, Q_{1/2} and sqrt(2(chi+1)) E(mu) from chi - 1."""
    chi = 1.0 + cm1
    mu = np.sqrt(2.0 / (chi + 1.0))
    mu_c = np.sqrt(cm1 / (chi + 1.0))
    K, E = _agm_KE(mu, mu_c)
    q0 = mu * K
    e_term = np.sqrt(2.0 * (chi + 1.0)) * E
    q1 = chi * q0 - e_term
    return q0, q1, e_term


def _forward(cm1, n_max, q0, d1):
    """Forward recursion carried on differences D_n = Q_{n-1/2} - Q_{n-3/2}.

    Since a_n - 1 = b_n the three-term recurrence becomes
    D_n = b_n D_{n-1} + a_n (chi - 1) Q_{n-3/2}, which stays accurate as
    chi -> 1 where the characteristic roots coalesce. Returns (Q, D).
    """
    if cm1.size <= _SCALAR_BATCH:
        return _forward_scalar(cm1, n_max, q0, d1)
    out = np.empty((n_max + 1,) + cm1.shape)
    diff = np.empty_like(out)
    out[0] = q0
    diff[0] = 0.0
    if n_max >= 1:
        out[1] = q0 + d1
        diff[1] = d1
    for n in range(2, n_max + 1):
        a = 4.0 * (n - 1) / (2 * n - 1)
        b = (2 * n - 3) / (2 * n - 1)
        diff[n] = b * diff[n - 1] + a * cm1 * out[n - 1]
        out[n] = out[n - 1] + diff[n]
    return np.moveaxis(out, 0, -1), np.moveaxis(diff, 0, -1)


def _forward_scalar(cm1, n_max, q0, d1):
    """Same recursion with Python floats, for a handful of points."""
    out = np.empty(cm1.shape + (n_max + 1,))
    diff = np.empty_like(out)
    for idx in np.ndindex(cm1.shape):
        c = float(cm1[idx])
        q = float(q0[idx])
        qs = [q]
        ds = [0.0]
        if n_max >= 1:
            d = float(d1[idx])
            q = q + d
            qs.append(q)
            ds.append(d)
            for n in range(2, n_max + 1):
                a = 4.0 * (n - 1) / (2 * n - 1)
                b = (2 * n - 3) / (2 * n - 1)
                d = b * d + a * c * q
                q = q + d
                qs.append(q)
                ds.append(d)
        out[idx] = qs
        diff[idx] = ds
    return out, diff


def _ratios_backward(cm1, n_max, n_start):
    """rho_n = Q_{n-1/2}/Q_{n-3/2}, n = 1..n_max, by backward recursion.

    ``n_start`` holds one starting index per point; above it the ratio is
    held at its asymptotic value 1/(chi + sqrt(chi^2 - 1)).

    With rho = 1 - tau the three-term ratio recursion becomes
    rho_{n-1} = b_n / den, tau_{n-1} = (a_n (chi - 1) + tau_n) / den,
    den = b_n + a_n (chi - 1) + tau_n (using a_n - 1 = b_n), which never
    subtracts nearly equal numbers as chi -> 1. The product of the ratios
    is taken directly: exp(sum log rho) would lose |sum log rho| ulps.
    """
    shape = cm1.shape
    cm1 = cm1.reshape(-1)
    n_start = np.broadcast_to(n_start, shape).reshape(-1)
    if cm1.size <= _SCALAR_BATCH:
        return _ratios_backward_scalar(cm1, n_max, n_start).reshape(shape + (n_max + 1,))
    # sorted by decreasing start, the live points at index n form a prefix
    order = np.argsort(-n_start, kind="stable")
    cm1 = cm1[order]
    n_start = n_start[order]
    root = np.sqrt(cm1 * (cm1 + 2.0))
    tau = (cm1 + root) / (1.0 + cm1 + root)
    rho = 1.0 / (1.0 + cm1 + root)
    ratios = np.empty((n_max + 1, cm1.size))
    top = int(n_start[0]) if cm1.size else 0
    # number of live points for each n: count of n_start >= n
    live_count = np.searchsorted(-n_start, -np.arange(top + 1), side="right")
    for n in range(top, 0, -1):
        c = live_count[n]
        if n <= n_max:
            ratios[n] = rho
        if n >= 2:
            a = 4.0 * (n - 1) / (2 * n - 1)
            b = (2 * n - 3) / (2 * n - 1)
            t = tau[:c]
            den = b + a * cm1[:c] + t
            rho[:c] = b / den
            tau[:c] = (a * cm1[:c] + t) / den
    ratios[0] = 1.0
    out = np.empty((cm1.size, n_max + 1))
    out[order] = ratios.T
    return out.reshape(shape + (n_max + 1,))


def _ratios_backward_scalar(cm1, n_max, n_start):
    """Same recursion with Python floats, for a handful of points."""
    out = np.empty((cm1.size, n_max + 1))
    for i in range(cm1.size):
        c = float(cm1[i])
        root = math.sqrt(c * (c + 2.0))
        tau = (c + root) / (1.0 + c + root)
        rho = 1.0 / (1.0 + c + root)
        row = out[i]
        for n in range(int(n_start[i]), 0, -1):
            if n <= n_max:
                row[n] = rho
            if n >= 2:
                a = 4.0 * (n - 1) / (2 * n - 1)
                b = (2 * n - 3) / (2 * n - 1)
                den = b + a * c + tau
                rho = b / den
                tau = (a * c + tau) / den
        row[0] = 1.0
    return out


def _miller_offset(cm1):
    """Start offset per point; the neglected solution is damped by exp(-2 eta offset)."""
    eta = np.log1p(cm1 + np.sqrt(cm1 * (cm1 + 2.0)))
    with np.errstate(divide="ignore"):
        need = np.ceil(MILLER_DAMPING / eta) + MILLER_MIN_OFFSET
    return np.minimum(need, 1e7).astype(np.int64)


def _backward(cm1, n_max, q0, verify=False):
    """Miller's algorithm normalized by Q_{-1/2}.

    The start offset damps the start error by exp(-40), far below
    rounding. With ``verify`` the offset is doubled until the normalized
    Q_{n_max} changes by less than ``MILLER_TOL``.
    """
    offset = _miller_offset(cm1)
    ratios = _ratios_backward(cm1, n_max, n_max + offset)
    active = np.arange(cm1.size) if verify else np.arange(0)
    flat_cm1 = cm1.reshape(-1)
    flat = ratios.reshape(-1, n_max + 1)
    off = offset.reshape(-1)
    for _ in range(12):
        if active.size == 0:
            break
        off[active] *= 2
        trial = _ratios_backward(flat_cm1[active], n_max, n_max + off[active])
        # relative change of the normalized Q_{n_max}
        change = np.abs(np.expm1(np.sum(np.log(trial / flat[active]), axis=-1)))
        flat[active] = trial
        active = active[change > MILLER_TOL]
    else:
        if active.size:
            raise DomainError("Miller recursion did not converge")
    with np.errstate(under="ignore"):
        return q0[..., None] * np.cumprod(flat.reshape(ratios.shape), axis=-1)


def use_forward(cm1, n_max):
    """True where forward recursion loses at most two digits (exp(2 n eta) <= 100)."""
    eta = np.log1p(cm1 + np.sqrt(cm1 * (cm1 + 2.0)))
    return 2.0 * n_max * eta <= FORWARD_LOSS_BUDGET


def legendre_q_raw(cm1, n_max, want_derivs=False, method="auto", verify=False):
    """Vectorized Q_{n-1/2}(1 + cm1), n = 0..n_max, on the last axis.

    No validation; ``cm1`` must be positive. ``method`` is ``auto``,
    ``forward`` or ``backward``; ``verify`` certifies the Miller start
    offset by doubling. Returns (values, derivs or None, backward mask).
    """
    cm1 = np.asarray(cm1, dtype=float)
    q0, _, e_term = _seeds(cm1)
    # Q_{1/2} - Q_{-1/2} = (chi - 1) Q_{-1/2} - sqrt(2(chi+1)) E, free of the log term
    d1 = cm1 * q0 - e_term
    if method == "forward":
        backward = np.zeros(cm1.shape, dtype=bool)
    elif method == "backward":
        backward = np.ones(cm1.shape, dtype=bool)
    else:
        backward = ~use_forward(cm1, n_max)
    if n_max == 0:
        backward = np.zeros(cm1.shape, dtype=bool)
    values = np.empty(cm1.shape + (n_max + 1,))
    diffs = np.empty_like(values)
    fw = ~backward
    if np.any(fw):
        values[fw], diffs[fw] = _forward(cm1[fw], n_max, q0[fw], d1[fw])
    if np.any(backward):
        vb = _backward(cm1[backward], n_max, q0[backward], verify=verify)
        values[backward] = vb
        diffs[backward] = np.diff(vb, axis=-1, prepend=0.0)
    derivs = None
    if want_derivs:
        derivs = np.empty_like(values)
        chi2m1 = cm1 * (cm1 + 2.0)
        derivs[..., 0] = -e_term / (2.0 * chi2m1)
        if n_max >= 1:
            n = np.arange(1, n_max + 1)
            q = values[..., 1:]
            # chi Q_n - Q_{n-1} written as (Q_n - Q_{n-1}) + (chi - 1) Q_n
            derivs[..., 1:] = (2 * n - 1) / (2.0 * chi2m1[..., None]) * (diffs[..., 1:] + cm1[..., None] * q)
    return values, derivs, backward


def legendre_q_seq(chi, n_max, want_derivs=False, method="auto"):
    """Half-integer Legendre functions of the second kind Q_{n-1/2}(chi), n = 0..n_max.

    Forward recursion from the elliptic seeds is used where its growth of
    rounding errors stays under two digits; Miller's backward recursion,
    normalized by Q_{-1/2}, everywhere else.

    Parameters
    ----------
    chi : ChiArgument or float or ndarray
        Separation parameter(s), chi > 1.
    n_max : int
    want_derivs : bool
        Also return dQ_{n-1/2}/dchi.
    """
    if not isinstance(chi, ChiArgument):
        chi = ChiArgument.from_chi(chi)
    cm1 = np.asarray(chi.chi_minus_1, dtype=float)
    if np.any(~(cm1 > 0)):
        raise DomainError("Q_{n-1/2}(chi) requires chi > 1")
    if n_max < 0:
        raise DomainError("n_max must be nonnegative")
    values, derivs, backward = legendre_q_raw(cm1, int(n_max), want_derivs, method)
    return LegendreQSequence(values=values, derivs=derivs, backward=backward)
