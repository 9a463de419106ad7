"""Modal Nystrom solver for the Dirichlet problems on bodies of revolution.

The boundary integral equation c sigma + K sigma = f on the surface is
reduced by the azimuthal Fourier transform to decoupled equations on the
generating curve,

    c sigma_n + K_n sigma_n = f_n,   n = -N..N,

with K_n the modal operator of :mod:`axibie.constants`. Since every kernel
here is even in the azimuth, K_{-n} = K_n and only n = 0..N are assembled and
factored. The pipeline is

1. :func:`choose_truncation` picks N from the sampled data,
2. :func:`assemble` forms c I + A^(n) for n = 0..N,
3. :func:`transform_rhs` computes f_n by FFT,
4. :func:`factor` and :func:`solve_modes` solve each mode,
5. :func:`reconstruct` returns sigma on an azimuthal grid,

and :func:`evaluate_potential` applies the layer potential off the surface.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import time
import warnings

import numpy as np
import scipy.linalg

from .constants import INV_4PI, NODES_PER_PANEL, SQRT_2PI, TWO_PI
from .errors import ConditioningError, ConfigError, ResolutionError
from .modal_kernels import FFT_MAX_SAMPLES as _MAX_FFT
from .modal_kernels import LayerKernel, _pow2, fourier_coeffs, monopole_coeffs
from .quadrature import DEFAULT_TOL, corrected_pairs, near_correction_entries
from .specfun import chi_minus_1_raw

logger = logging.getLogger(__name__)

EQUATIONS = ("laplace", "helmholtz")
SIDES = ("interior", "exterior")

FFT_AUDIT_TOL = 1e-11
_SAMPLE_BUDGET = 4_000_000


@dataclass(frozen=True)
class ProblemSpec:
    """Which boundary value problem to solve and how.

    Parameters
    ----------
    equation : {'laplace', 'helmholtz'}
    side : {'interior', 'exterior'}
        Helmholtz supports the exterior combined-field formulation only.
    wavenumber : float
        k >= 0 (Helmholtz).
    coupling : float, optional
        nu in D - i nu S; defaults to k.
    x0 : (float, float), optional
        Auxiliary monopole (r0, z0) for the exterior Laplace problem; must
        lie on the axis. Defaults to the axis point at the centroid height.
    quad_tol : float
        Relative tolerance of the adaptive near corrections.
    oversample : int
        FFT oversampling factor for far pairs.
    audit_fraction : float
        Fraction of far pairs re-sampled at twice the FFT length.
    """

    equation: str = "laplace"
    side: str = "interior"
    wavenumber: float = 0.0
    coupling: float | None = None
    x0: tuple | None = None
    quad_tol: float = DEFAULT_TOL
    oversample: int = 4
    audit_fraction: float = 0.01

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise ConfigError(f"equation must be one of {EQUATIONS}")
        if self.side not in SIDES:
            raise ConfigError(f"side must be one of {SIDES}")
        if self.equation == "helmholtz" and self.side != "exterior":
            raise ConfigError("Helmholtz is supported for the exterior combined-field problem only")
        if not np.isfinite(self.wavenumber) or self.wavenumber < 0:
            raise ConfigError("wavenumber must be finite and >= 0")
        if self.coupling is not None and (not np.isfinite(self.coupling) or self.coupling < 0):
            raise ConfigError("coupling must be finite and >= 0")
        if self.x0 is not None and float(self.x0[0]) != 0.0:
            raise ConfigError("the auxiliary point x0 must lie on the symmetry axis (r0 = 0)")
        if not 0 < self.quad_tol < 1:
            raise ConfigError("quad_tol must be in (0, 1)")
        if int(self.oversample) < 2:
            raise ConfigError("oversample must be >= 2")
        if not 0 <= self.audit_fraction <= 1:
            raise ConfigError("audit_fraction must be in [0, 1]")

    @property
    def identity_coefficient(self):
        return -0.5 if self.equation == "laplace" else 0.5

    @property
    def nu(self):
        return self.wavenumber if self.coupling is None else self.coupling

    @property
    def is_complex(self):
        return self.equation == "helmholtz"

    def resolve_x0(self, curve):
        """Monopole location for the exterior Laplace problem."""
        if self.x0 is not None:
            x0 = (0.0, float(self.x0[1]))
        else:
            if curve.closed_loop:
                raise ConfigError("exterior Laplace needs an on-axis point inside D; a torus has none")
            x0 = curve.axis_center()
        if curve.closed_loop:
            raise ConfigError("exterior Laplace needs an on-axis point inside D; a torus has none")
        za = float(curve.position(0.0)[1])
        zb = float(curve.position(curve.total_length)[1])
        if not min(za, zb) < x0[1] < max(za, zb):
            raise ConfigError("x0 must lie inside the body")
        return x0

    def kernel(self, curve):
        """The :class:`LayerKernel` of this formulation."""
        if self.equation == "helmholtz":
            return LayerKernel("helmholtz_combined", wavenumber=float(self.wavenumber), coupling=self.nu)
        if self.side == "interior":
            return LayerKernel("laplace_double_interior")
        return LayerKernel("laplace_double_exterior", x0=self.resolve_x0(curve))


@dataclass
class ModalSystem:
    """Dense system c I + A^(n) for one Fourier mode (also used for -n)."""

    mode: int
    matrix: np.ndarray
    factorization: object = None

    @property
    def dtype(self):
        return self.matrix.dtype


@dataclass
class ModalStack:
    """Systems for n = 0..N sharing one contiguous (N+1, I, I) array."""

    mesh: object
    spec: ProblemSpec
    n_max: int
    matrices: np.ndarray
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return self.n_max + 1

    def __getitem__(self, n):
        n = abs(int(n))
        if n > self.n_max:
            raise IndexError(n)
        return ModalSystem(n, self.matrices[n])

    def __iter__(self):
        return (self[n] for n in range(self.n_max + 1))

    @property
    def identity_coefficient(self):
        return self.spec.identity_coefficient

    def operator(self, n):
        """A^(n) without the identity term."""
        m = self[n].matrix.copy()
        m[np.diag_indices_from(m)] -= self.identity_coefficient
        return m


# -- data transforms -------------------------------------------------------------------------

def theta_grid(M):
    return TWO_PI * np.arange(M) / M


def transform_rhs(f, n_max):
    """f_n for n = -N..N from samples f[m, i] at theta_m = 2 pi m / M.

    Returns shape (2N+1, I), row N + n holding mode n.
    """
    f = np.asarray(f)
    M = f.shape[0]
    if M < 2 * n_max + 1:
        raise ResolutionError(f"{M} azimuthal samples cannot resolve 2N+1 = {2 * n_max + 1} modes")
    full = np.fft.fft(f, axis=0) * (SQRT_2PI / M)
    idx = np.arange(-n_max, n_max + 1) % M
    return full[idx]


def reconstruct(sigma_n, M):
    """sigma(theta_m, node) = sum_n e^{in theta_m} sigma_n / sqrt(2 pi), shape (M, I)."""
    sigma_n = np.asarray(sigma_n)
    n_max = (sigma_n.shape[0] - 1) // 2
    if M < 2 * n_max + 1:
        raise ResolutionError("grid too small for the stored modes")
    full = np.zeros((M,) + sigma_n.shape[1:], dtype=complex)
    full[np.arange(-n_max, n_max + 1) % M] = sigma_n
    return np.fft.ifft(full, axis=0) * (M / SQRT_2PI)


def mode_energy(f_n, weights):
    """sum_i weights_i |f_n(i)|^2 for every row of ``f_n``."""
    return np.sum(np.abs(f_n) ** 2 * weights, axis=-1)


def choose_truncation(f, eps, weights=None):
    """Smallest N whose discarded modes carry relative energy <= eps^2.

    Parameters
    ----------
    f : ndarray (M, I)
        Data on the uniform azimuthal grid times the boundary nodes.
    eps : float
        Relative truncation tolerance in the area-weighted L2 norm.
    weights : ndarray (I,), optional
        Node weights r_i w_i of the surface measure; uniform if omitted.

    Returns
    -------
    N : int
    tail : float
        Relative L2 size of the discarded modes.
    """
    f = np.asarray(f)
    M = f.shape[0]
    weights = np.ones(f.shape[1]) if weights is None else np.asarray(weights, float)
    full = np.fft.fft(f, axis=0) * (SQRT_2PI / M)
    energy = mode_energy(full, weights)
    total = float(np.sum(energy))
    if total == 0.0:
        return 0, 0.0
    half = M // 2
    n = np.arange(M)
    absn = np.minimum(n, M - n)
    # energy per |n|
    by_mode = np.bincount(absn, weights=energy, minlength=half + 1)
    if np.sum(by_mode[3 * half // 4:]) > eps * eps * total:
        raise ResolutionError(f"azimuthal grid of {M} points too coarse to certify the tail at eps={eps:g}")
    # summed from the top: total - cumsum cancels once eps^2 is below rounding
    tail_after = np.append(np.cumsum(by_mode[:0:-1])[::-1], 0.0)
    N = int(np.argmax(tail_after <= eps * eps * total))
    return N, float(np.sqrt(tail_after[N] / total))


# -- assembly ------------------------------------------------------------------------------

def _eta(cm1):
    """acosh(chi): the half-width of analyticity of the kernel in theta."""
    return np.log1p(cm1 + np.sqrt(cm1 * (cm1 + 2.0)))


def _far_coeffs(kernel, n_max, r, z, rs, zs, nrs, nzs, M):
    out = []
    theta = TWO_PI * np.arange(M) / M
    step = max(1, _SAMPLE_BUDGET // M)
    for c in range(0, r.size, step):
        sl = slice(c, c + step)
        vals = kernel.samples(r[sl], z[sl], rs[sl], zs[sl], nrs[sl], nzs[sl], theta)
        out.append(fourier_coeffs(vals, n_max))
    return np.concatenate(out) if out else np.zeros((0, n_max + 1), dtype=kernel.dtype)


def far_modal_coeffs(kernel, n_max, r, z, rs, zs, nrs, nzs, oversample=4, audit_fraction=0.01, rng=None):
    """Kernel coefficients for well-separated pairs by FFT, audited.

    Each pair gets the power-of-two length from :func:`fft_size`. Pairs are
    grouped by length; a random subset of each group is recomputed with
    twice the samples and, if any audited pair disagrees by more than
    ``FFT_AUDIT_TOL`` of its largest coefficient, the whole group is
    re-evaluated on the recursion/convolution path.

    Returns coefficients (P, n_max+1) and a stats dict.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    cm1 = chi_minus_1_raw(r, z, rs, zs)
    eta = _eta(cm1)
    k = kernel.wavenumber if kernel.is_complex else 0.0
    rmax = np.maximum(r, rs)
    need = np.maximum(oversample * (2 * n_max + 1), n_max + 40.0 / eta)
    if k > 0:
        need = need + 2.0 * k * rmax + 32
    Ms = np.array([_pow2(m) for m in np.ceil(need)]) if need.size else np.zeros(0, int)
    out = np.zeros((r.size, n_max + 1), dtype=kernel.dtype)
    stats = {"fft_pairs": 0, "escalated_pairs": 0, "audited_pairs": 0, "fft_lengths": {}}
    for M in np.unique(Ms):
        idx = np.flatnonzero(Ms == M)
        args = (r[idx], z[idx], rs[idx], zs[idx], nrs[idx], nzs[idx])
        if M > _MAX_FFT:
            out[idx] = kernel.near_coeffs(*args, n_max)
            stats["escalated_pairs"] += idx.size
            continue
        coef = _far_coeffs(kernel, n_max, *args, int(M))
        if audit_fraction > 0:
            n_audit = min(idx.size, max(1, int(np.ceil(audit_fraction * idx.size))))
            pick = rng.choice(idx.size, n_audit, replace=False)
            ref = _far_coeffs(kernel, n_max, *(a[pick] for a in args), 2 * int(M))
            stats["audited_pairs"] += n_audit
            err = np.max(np.abs(ref - coef[pick]), axis=1)
            size = np.max(np.abs(ref), axis=1)
            if np.any(err > FFT_AUDIT_TOL * np.maximum(size, 1e-300)):
                logger.info("FFT audit failed at M=%d; %d pairs moved to the recursion path", M, idx.size)
                coef = kernel.near_coeffs(*args, n_max)
                stats["escalated_pairs"] += idx.size
                out[idx] = coef
                continue
        out[idx] = coef
        stats["fft_pairs"] += idx.size
        stats["fft_lengths"][int(M)] = int(idx.size)
    return out, stats


def assemble(mesh, spec, n_max, seed=0):
    """Matrices c I + A^(n), n = 0..N, for the formulation ``spec``.

    Far pairs (target outside the doubled enclosing circle of the source
    panel) use one FFT per pair for all modes; near pairs use adaptive
    corrections built from the recursion/convolution path.
    """
    n_max = int(n_max)
    if n_max < 0:
        raise ConfigError("N must be >= 0")
    kernel = spec.kernel(mesh.curve)
    I = mesh.n_nodes
    t0 = time.perf_counter()
    ti, pj, promoted = corrected_pairs(mesh, kernel, tol=spec.quad_tol)
    near = np.zeros((I, mesh.n_panels), dtype=bool)
    near[ti, pj] = True
    far_i, far_j = np.nonzero(~near[:, mesh.panel_id])
    mats = np.zeros((n_max + 1, I, I), dtype=kernel.dtype)

    coef, fstats = far_modal_coeffs(kernel, n_max, mesh.r[far_i], mesh.z[far_i], mesh.r[far_j], mesh.z[far_j],
                                    mesh.nr[far_j], mesh.nz[far_j], oversample=int(spec.oversample),
                                    audit_fraction=spec.audit_fraction, rng=np.random.default_rng(seed))
    rw = mesh.r * mesh.w
    mats[:, far_i, far_j] = (SQRT_2PI * coef * rw[far_j, None]).T
    t_far = time.perf_counter() - t0

    entries, nstats = near_correction_entries(mesh, kernel, n_max, ti, pj, tol=spec.quad_tol)
    jj = pj[:, None] * NODES_PER_PANEL + np.arange(NODES_PER_PANEL)[None, :]
    for n in range(n_max + 1):
        mats[n, ti[:, None], jj] = entries[:, :, n]
    if kernel.kind == "laplace_double_exterior":
        mono = monopole_coeffs(mesh.r, mesh.z, kernel.x0, 0)[:, 0]
        mats[0] += SQRT_2PI * np.outer(mono, rw)
    c = spec.identity_coefficient
    diag = np.arange(I)
    mats[:, diag, diag] += c
    stats = {"far_pairs": int(far_i.size), "near_pairs": int(ti.size), "guard_pairs": promoted, "T_far": t_far,
             "T_near": time.perf_counter() - t0 - t_far, **fstats, **{"near_" + k: v for k, v in nstats.items()}}
    return ModalStack(mesh=mesh, spec=spec, n_max=n_max, matrices=mats, stats=stats)


# -- factor and solve -------------------------------------------------------------------------

@dataclass
class ModalFactors:
    """Per-mode factorizations for n = 0..N; negative modes reuse |n|."""

    n_max: int
    method: str
    lu: list = None
    inverse: np.ndarray = None

    def solve(self, n, b):
        n = abs(int(n))
        if self.method == "inverse":
            return self.inverse[n] @ b
        return scipy.linalg.lu_solve(self.lu[n], b, check_finite=False)


def _check_pivots(n, lu, limit):
    small = float(np.min(np.abs(lu.diagonal())))
    if not small > limit:
        raise ConditioningError(f"mode {n} is singular to working precision (pivot {small:.3e})", mode=n,
                                pivot=small)


def _lu_one(n, m, limit):
    lu, piv = scipy.linalg.lu_factor(m, check_finite=False)
    _check_pivots(n, lu, limit)
    return lu, piv


def _inverse_one(n, m, limit):
    getrf, getri = scipy.linalg.lapack.get_lapack_funcs(("getrf", "getri"), (m,))
    lu, piv, info = getrf(m)
    _check_pivots(n, lu, limit)
    inv, info = getri(lu, piv)
    return inv


def factor(systems, method="lu", workers=1):
    """Factor every mode: LU with partial pivoting, or explicit inverses.

    ``method='inverse'`` forms the inverses (LAPACK getrf + getri per
    mode), the factor-once/apply-many route used for timing. A pivot at
    or below I * eps * max|M| raises :class:`ConditioningError`.
    """
    mats = systems.matrices if isinstance(systems, ModalStack) else np.stack([s.matrix for s in systems])
    n_max = mats.shape[0] - 1
    if method not in ("lu", "inverse"):
        raise ConfigError(f"unknown factorization method {method!r}")
    limits = mats.shape[1] * np.finfo(float).eps * np.max(np.abs(mats), axis=(1, 2))
    limits = np.where(np.isfinite(limits), limits, np.inf)
    one = _lu_one if method == "lu" else _inverse_one
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(one, range(n_max + 1), mats, limits))
    else:
        parts = [one(n, mats[n], limits[n]) for n in range(n_max + 1)]
    if method == "inverse":
        return ModalFactors(n_max, "inverse", inverse=np.stack(parts))
    return ModalFactors(n_max, "lu", lu=parts)


def solve_modes(factors, f_n):
    """sigma_n for rows n = -N..N of ``f_n`` (shape (2N+1, I))."""
    f_n = np.asarray(f_n)
    N = (f_n.shape[0] - 1) // 2
    if N > factors.n_max:
        raise ConfigError(f"data has modes up to {N} but only {factors.n_max} are factored")
    dtype = np.result_type(f_n, factors.inverse if factors.method == "inverse" else factors.lu[0][0])
    out = np.empty(f_n.shape, dtype=dtype)
    if factors.method == "inverse":
        # each |n| solves the pair (f_n, f_{-n}) in one product
        inv = factors.inverse[: N + 1]
        if np.iscomplexobj(f_n) and not np.iscomplexobj(inv):
            # real inverses: apply to real and imaginary parts rather than casting the stack
            rhs = np.stack([f_n[N:].real, f_n[N::-1].real, f_n[N:].imag, f_n[N::-1].imag], axis=-1)
            sol = inv @ rhs
            sol = sol[..., :2] + 1j * sol[..., 2:]
        else:
            rhs = np.stack([f_n[N:], f_n[N::-1]], axis=-1)  # (N+1, I, 2)
            sol = inv @ rhs
        out[N:] = sol[..., 0]
        out[N::-1] = sol[..., 1]
        return out
    for n in range(N + 1):
        b = np.stack([f_n[N + n], f_n[N - n]], axis=-1)
        x = factors.solve(n, b)
        out[N + n] = x[:, 0]
        out[N - n] = x[:, 1]
    return out


def residuals(systems, sigma_n, f_n):
    """Per-mode ||(cI + A^(n)) sigma_n - f_n||_inf / ||f_n||_inf, rows n = -N..N."""
    N = (f_n.shape[0] - 1) // 2
    res = np.zeros(2 * N + 1)
    for idx, n in enumerate(range(-N, N + 1)):
        m = systems.matrices[abs(n)]
        scale = np.max(np.abs(f_n[idx]))
        r = np.max(np.abs(m @ sigma_n[idx] - f_n[idx]))
        res[idx] = r / scale if scale > 0 else r
    return res


@dataclass
class SolveResult:
    """Modal densities and the data needed to evaluate the solution."""

    mesh: object
    spec: ProblemSpec
    n_max: int
    sigma_n: np.ndarray
    f_n: np.ndarray = None
    timings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    systems: ModalStack = None
    factors: ModalFactors = None

    def sigma_grid(self, M=None):
        """Density on an M x I azimuthal grid (real part for real problems)."""
        M = 2 * (2 * self.n_max + 1) if M is None else M
        grid = reconstruct(self.sigma_n, M)
        return grid if self.spec.is_complex else grid.real


def solve(mesh, spec, f, n_max=None, eps=1e-12, method="lu", workers=1, seed=0, keep_systems=False):
    """Run the full pipeline for boundary data ``f`` sampled on (M, I).

    ``n_max`` fixes N; otherwise it is chosen with :func:`choose_truncation`
    at tolerance ``eps``.
    """
    f = np.asarray(f)
    if f.ndim != 2 or f.shape[1] != mesh.n_nodes:
        raise ConfigError("boundary data must have shape (M, number of nodes)")
    timings = {}
    diag = {}
    if n_max is None:
        n_max, tail = choose_truncation(f, eps, mesh.r * mesh.w)
        diag["truncation_tail"] = tail
    t0 = time.perf_counter()
    systems = assemble(mesh, spec, n_max, seed=seed)
    timings["T_mat"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    factors = factor(systems, method=method, workers=workers)
    timings["T_inv"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    f_n = transform_rhs(f, n_max)
    timings["T_fft"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    sigma_n = solve_modes(factors, f_n)
    timings["T_apply"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    reconstruct(sigma_n, f.shape[0])
    timings["T_fft"] += time.perf_counter() - t0
    res = residuals(systems, sigma_n, f_n)
    diag.update({"max_residual": float(np.max(res)), "assembly": systems.stats})
    if not spec.is_complex:
        sigma_n = sigma_n.astype(complex)
    return SolveResult(mesh=mesh, spec=spec, n_max=n_max, sigma_n=sigma_n, f_n=f_n, timings=timings,
                       diagnostics=diag, systems=systems if keep_systems else None,
                       factors=factors if keep_systems else None)


# -- potential evaluation -----------------------------------------------------------------------

def _layer_kernel_3d(spec, x, y, ny):
    """Kernel of the representation at targets x (P,1,3) and sources y (1,Q,3)."""
    d = x - y
    R2 = np.sum(d * d, axis=-1)
    R = np.sqrt(R2)
    ndx = np.sum(ny * d, axis=-1)
    if spec.equation == "laplace":
        dl = INV_4PI * ndx / (R2 * R)
        return dl if spec.side == "interior" else -dl
    k = float(spec.wavenumber)
    phase = np.exp(1j * k * R)
    single = INV_4PI * phase / R
    double = INV_4PI * ndx / (R2 * R) * (1.0 - 1j * k * R) * phase
    return double - 1j * spec.nu * single


def evaluate_potential(result, points, spec=None, M_eval=None, guard=None):
    """Layer potential of the solved density at off-surface points (P, 3).

    Tensor rule: panel Gauss weights in arc length times the trapezoid rule
    in azimuth with ``M_eval`` samples, enough for the closest target.
    """
    spec = result.spec if spec is None else spec
    mesh = result.mesh
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != 3:
        raise ConfigError("points must have shape (P, 3)")
    if not np.any(result.sigma_n):
        return np.zeros(len(pts), dtype=complex if spec.is_complex else float)
    rho = np.hypot(pts[:, 0], pts[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        cm1 = chi_minus_1_raw(rho[:, None], pts[:, 2, None], mesh.r[None, :], mesh.z[None, :])
    dist = np.min(np.hypot(rho[:, None] - mesh.r[None, :], pts[:, 2, None] - mesh.z[None, :]), axis=1)
    guard = mesh.panel_length if guard is None else guard
    if np.any(dist < guard):
        warnings.warn("some targets are closer to the surface than one panel length; accuracy not certified",
                      RuntimeWarning, stacklevel=2)
    with np.errstate(divide="ignore"):
        eta = float(np.min(_eta(np.where(rho[:, None] > 0, cm1, np.inf))))
    if M_eval is None:
        N = result.n_max
        need = 2 * (2 * N + 1)
        if np.isfinite(eta) and eta > 0:
            need = max(need, 40.0 / eta + 2 * N + 1)
        if spec.is_complex:
            need += 2.0 * spec.wavenumber * float(np.max(mesh.r)) + 32
        M_eval = _pow2(need)
    sigma = reconstruct(result.sigma_n, M_eval)  # (M, I)
    if not spec.is_complex:
        sigma = sigma.real
    th = theta_grid(M_eval)
    ct, st = np.cos(th)[:, None], np.sin(th)[:, None]
    shape = (M_eval, mesh.n_nodes)
    y = np.stack([mesh.r * ct, mesh.r * st, np.broadcast_to(mesh.z, shape)], axis=-1).reshape(-1, 3)
    ny = np.stack([mesh.nr * ct, mesh.nr * st, np.broadcast_to(mesh.nz, shape)], axis=-1).reshape(-1, 3)
    dens = (sigma * np.broadcast_to(mesh.r * mesh.w, sigma.shape) * (TWO_PI / M_eval)).reshape(-1)
    x0 = spec.resolve_x0(mesh.curve) if (spec.equation == "laplace" and spec.side == "exterior") else None
    out = np.zeros(len(pts), dtype=complex if spec.is_complex else float)
    step = max(1, _SAMPLE_BUDGET // y.shape[0])
    for c in range(0, len(pts), step):
        xs = pts[c: c + step, None, :]
        ker = _layer_kernel_3d(spec, xs, y[None], ny[None])
        out[c: c + step] = ker @ dens
    if x0 is not None:
        total = np.sum(dens)
        out += INV_4PI * total / np.hypot(rho, pts[:, 2] - x0[1])
    return out
