"""Verification and measurement tools.

* point-charge manufactured solutions (:class:`ChargeOracle`),
* relative l-infinity error reports,
* timing runs that split the cost into T_mat, T_inv, T_fft and T_apply,
* per-mode singular values,
* a brute-force oracle for modal kernels by adaptive quadrature of the
  azimuthal Fourier integral, written independently of
  :mod:`axibie.modal_kernels`.
"""

from dataclasses import dataclass, field
import logging
import math
import time

import numpy as np
from scipy.integrate import quad_vec

from .constants import INV_4PI, NODES_PER_PANEL, SQRT_2PI, TWO_PI
from .errors import ConfigError, OracleError, PlacementError
from .geometry import build_mesh
from .solver import ProblemSpec, assemble, factor, reconstruct, solve_modes, theta_grid, transform_rhs

logger = logging.getLogger(__name__)

N_TEST_POINTS = 64
N_CHARGES = 3


# -- point sets ------------------------------------------------------------------------------

def fibonacci_sphere(n, radius=1.0, center=(0.0, 0.0, 0.0)):
    """n well-spread points on a sphere (golden-angle spiral)."""
    i = np.arange(n) + 0.5
    zc = 1.0 - 2.0 * i / n
    rho = np.sqrt(1.0 - zc * zc)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    pts = np.stack([rho * np.cos(phi), rho * np.sin(phi), zc], axis=-1)
    return radius * pts + np.asarray(center, dtype=float)


def inside_meridian(curve, r, z, samples=4001):
    """True where the point (r, z) of the meridian half plane lies inside D."""
    _, cr, cz = curve.sample(samples)
    if not curve.closed_loop:
        # mirror across the axis so that points on the axis are strictly inside or outside
        cr = np.concatenate([cr, -cr[::-1]])
        cz = np.concatenate([cz, cz[::-1]])
    r = np.asarray(r, float)[..., None]
    z = np.asarray(z, float)[..., None]
    r1, z1 = cr[:-1], cz[:-1]
    r2, z2 = cr[1:], cz[1:]
    crosses = (z1 > z) != (z2 > z)
    with np.errstate(divide="ignore", invalid="ignore"):
        rx = r1 + (z - z1) * (r2 - r1) / (z2 - z1)
    hits = crosses & (r < rx)
    return (np.count_nonzero(hits, axis=-1) % 2) == 1


def test_points(curve, side, n=N_TEST_POINTS):
    """Evaluation points on a sphere around the body's axis centre.

    Interior problems: radius 0.5 x the inscribed radius. Exterior: 2 x the
    bounding radius.
    """
    rc, zc = curve.axis_center()
    if side == "interior":
        if curve.closed_loop:
            raise ConfigError("interior test points on a torus need a tube-centred set; not provided")
        radius = 0.5 * curve.inscribed_radius((rc, zc))
    else:
        radius = 2.0 * curve.bounding_radius(zc)
    return fibonacci_sphere(n, radius, (0.0, 0.0, zc))


# -- point-charge oracle -----------------------------------------------------------------------

@dataclass(frozen=True)
class ChargeOracle:
    """Sum of point sources; the exact solution of the boundary value problem it generates.

    ``locations`` has shape (C, 3). For Helmholtz the kernel is
    e^{ik|x|}/(4 pi |x|).
    """

    locations: np.ndarray
    strengths: np.ndarray
    equation: str = "laplace"
    wavenumber: float = 0.0
    seed: int | None = None

    def potential(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = np.linalg.norm(pts[:, None, :] - self.locations[None, :, :], axis=-1)
        if self.equation == "laplace":
            g = INV_4PI / d
        else:
            g = INV_4PI * np.exp(1j * self.wavenumber * d) / d
        return g @ self.strengths

    def check_placement(self, curve, side):
        """Charges must lie outside D for interior problems and inside for exterior ones."""
        rho = np.hypot(self.locations[:, 0], self.locations[:, 1])
        inside = inside_meridian(curve, rho, self.locations[:, 2])
        wrong = inside if side == "interior" else ~inside
        if np.any(wrong):
            raise PlacementError(f"charge {int(np.flatnonzero(wrong)[0])} is on the wrong side of the surface "
                                 f"for the {side} problem")


def random_charges(curve, side, equation="laplace", wavenumber=0.0, n=N_CHARGES, seed=0):
    """Seeded random charges on the side of the surface away from the solution domain.

    Interior problems: on a sphere of 1.5 x the bounding radius. Exterior
    problems: uniformly in a ball of 0.4 x the inscribed radius around
    the axis centre.
    """
    rng = np.random.default_rng(seed)
    rc, zc = curve.axis_center()
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    if side == "interior":
        loc = 1.5 * curve.bounding_radius(zc) * dirs
    else:
        if curve.closed_loop:
            raise ConfigError("exterior charges for a torus are not provided")
        rad = 0.4 * curve.inscribed_radius((rc, zc)) * rng.uniform(size=(n, 1)) ** (1.0 / 3.0)
        loc = rad * dirs
    loc = loc + np.array([0.0, 0.0, zc])
    strengths = rng.uniform(0.5, 1.5, size=n) * rng.choice([-1.0, 1.0], size=n)
    oracle = ChargeOracle(loc, strengths, equation, float(wavenumber), seed)
    oracle.check_placement(curve, side)
    return oracle


def surface_points(mesh, M):
    """Cartesian nodes of the (M, I) tensor grid."""
    th = theta_grid(M)[:, None]
    return np.stack([mesh.r * np.cos(th), mesh.r * np.sin(th), np.broadcast_to(mesh.z, (M, mesh.n_nodes))],
                    axis=-1)


def oracle_boundary_data(oracle, mesh, M, side=None):
    """f(theta_m, node_i) for the charges, shape (M, I)."""
    if side is not None:
        oracle.check_placement(mesh.curve, side)
    pts = surface_points(mesh, M).reshape(-1, 3)
    return oracle.potential(pts).reshape(M, mesh.n_nodes)


# -- error metric ----------------------------------------------------------------------------

@dataclass
class ErrorReport:
    rel_linf: float
    points: np.ndarray
    errors: np.ndarray
    seed: int | None = None

    def as_dict(self):
        return {"rel_linf": float(self.rel_linf), "n_points": int(len(self.points)),
                "max_abs_error": float(np.max(self.errors)) if self.errors.size else 0.0, "seed": self.seed}


def error_report(computed, exact, points=None, seed=None):
    """max|u_approx - u| / max|u| over the test points."""
    computed = np.asarray(computed)
    exact = np.asarray(exact)
    err = np.abs(computed - exact)
    scale = np.max(np.abs(exact)) if exact.size else 0.0
    rel = float(np.max(err) / scale) if scale > 0 else float(np.max(err, initial=0.0))
    return ErrorReport(rel, np.asarray(points) if points is not None else np.zeros((0, 3)), err, seed)


def default_azimuthal_samples(n_max, oracle=None, mesh=None):
    """Grid size for boundary data: at least 4 x (2N+1) and a power of two."""
    M = 4 * (2 * n_max + 1)
    return 1 << int(math.ceil(math.log2(M)))


def point_charge_test(curve, spec, n_panels, n_max, seed=0, n_charges=N_CHARGES, workers=1):
    """Solve with manufactured data and measure the error at the test points.

    Returns (ErrorReport, SolveResult, ChargeOracle).
    """
    from .solver import evaluate_potential, solve

    mesh = build_mesh(curve, n_panels)
    oracle = random_charges(curve, spec.side, spec.equation, spec.wavenumber, n_charges, seed)
    M = default_azimuthal_samples(n_max)
    f = oracle_boundary_data(oracle, mesh, M, spec.side)
    result = solve(mesh, spec, f, n_max=n_max, seed=seed, workers=workers)
    pts = test_points(curve, spec.side)
    u = evaluate_potential(result, pts)
    report = error_report(u, oracle.potential(pts), pts, seed)
    return report, result, oracle


# -- timing -------------------------------------------------------------------------------------

def timing_run(curve, spec, sizes, seed=0, threads=1, repeats=1, warmup=True, phase_repeats=5):
    """Wall-clock split of the solve for each (N_P, N) in ``sizes``.

    T_mat covers assembly, T_inv the inversion of all modes, T_fft the
    forward and inverse azimuthal transforms and T_apply the application of
    the inverses. Each row keeps the fastest of ``repeats`` full runs; the
    short phases (inversion, transforms, application) are additionally
    timed as the fastest of ``phase_repeats`` passes. Numerics are run
    single threaded unless ``threads`` says otherwise. Returns a list of
    dict rows.
    """
    from threadpoolctl import threadpool_limits

    rows = []
    with threadpool_limits(limits=threads):
        if warmup and sizes:
            n_p, n = sizes[0]
            _timed_solve(curve, spec, n_p, n, seed, 1)
        for n_p, n in sizes:
            best = None
            for _ in range(repeats):
                row = _timed_solve(curve, spec, n_p, n, seed, phase_repeats)
                if best is None:
                    best = row
                else:
                    for key in ("T_mat", "T_inv", "T_fft", "T_apply"):
                        best[key] = min(best[key], row[key])
            rows.append(best)
    return rows


def _best_of(fn, repeats):
    best, out = np.inf, None
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _timed_solve(curve, spec, n_panels, n_max, seed, phase_repeats=1):
    mesh = build_mesh(curve, n_panels)
    M = default_azimuthal_samples(n_max)
    oracle = random_charges(curve, spec.side, spec.equation, spec.wavenumber, seed=seed)
    f = oracle_boundary_data(oracle, mesh, M)
    t_mat, systems = _best_of(lambda: assemble(mesh, spec, n_max, seed=seed), 1)
    t_inv, factors = _best_of(lambda: factor(systems, method="inverse"), phase_repeats)
    t_fwd, f_n = _best_of(lambda: transform_rhs(f, n_max), phase_repeats)
    t_apply, sigma_n = _best_of(lambda: solve_modes(factors, f_n), phase_repeats)
    t_back, _ = _best_of(lambda: reconstruct(sigma_n, M), phase_repeats)
    return {"N_P": n_panels, "2N+1": 2 * n_max + 1, "I": mesh.n_nodes, "N_tot": mesh.n_nodes * (2 * n_max + 1),
            "T_mat": t_mat, "T_inv": t_inv, "T_fft": t_fwd + t_back, "T_apply": t_apply,
            "checksum": float(np.sum(np.abs(sigma_n)))}


def fit_exponent(n_tot, times):
    """Least-squares alpha in T = C N_tot^alpha (log-log fit)."""
    x = np.log(np.asarray(n_tot, float))
    y = np.log(np.asarray(times, float))
    alpha, _ = np.polyfit(x, y, 1)
    return float(alpha)


# -- conditioning -------------------------------------------------------------------------------

def conditioning_probe(systems):
    """(n, sigma_min, sigma_max) of c I + A^(n) for every stored mode."""
    mats = systems.matrices
    sv = np.linalg.svd(mats, compute_uv=False)
    return np.column_stack([np.arange(mats.shape[0]), sv[:, -1], sv[:, 0]])


# -- brute-force modal kernel oracle -------------------------------------------------------------------

def _kernel_3d(kind, r, z, rs, zs, nrs, nzs, theta, k, nu, x0):
    """Kernel with the target at azimuth theta and the source at azimuth 0, Cartesian form."""
    c = np.cos(theta)
    s = np.sin(theta)
    # x - x' with the radial part written as (r - r') - 2 r sin^2(theta / 2)
    dx = (r - rs) - 2.0 * r * np.sin(0.5 * theta) ** 2
    dy = r * s
    dzz = z - zs
    R = np.sqrt(dx * dx + dy * dy + dzz * dzz)
    del c
    if kind == "laplace_single":
        return INV_4PI / R
    if kind in ("helmholtz_single", "greens_phi_k"):
        return INV_4PI * np.exp(1j * k * R) / R
    ndx = nrs * dx + nzs * dzz
    dl = INV_4PI * ndx / R ** 3
    if kind == "laplace_double_interior":
        return dl
    if kind == "laplace_double_exterior":
        r0, z0 = x0
        mono = INV_4PI / np.sqrt(r * r + r0 * r0 - 2.0 * r * r0 * np.cos(theta) + (z - z0) ** 2)
        return -dl + mono
    hd = dl * (1.0 - 1j * k * R) * np.exp(1j * k * R)
    if kind == "helmholtz_double":
        return hd
    if kind == "helmholtz_combined":
        return hd - 1j * nu * INV_4PI * np.exp(1j * k * R) / R
    raise OracleError(f"unknown kernel kind {kind!r}")


def brute_force_modal_kernel(kind, target, source, normal=None, n=0, wavenumber=0.0, coupling=None, x0=None,
                             tol=1e-13, return_scale=False):
    """k_n by adaptive Gauss-Kronrod quadrature of the defining integral.

    k_n = (2 / sqrt(2 pi)) int_0^pi cos(n theta) k(theta) d theta, the kernel
    being even. The interval is split geometrically toward theta = 0 where
    the integrand peaks. ``n`` may be an array; all modes share one
    adaptive run.

    With ``return_scale`` also returns (2/sqrt(2 pi)) int_0^pi |k| d theta,
    the natural size against which cancellation in k_n is measured.
    """
    r, z = map(float, target)
    rs, zs = map(float, source)
    nrs, nzs = (0.0, 0.0) if normal is None else map(float, normal)
    k = float(wavenumber)
    nu = k if coupling is None else float(coupling)
    ns = np.atleast_1d(np.asarray(n, dtype=float))
    d2 = (r - rs) ** 2 + (z - zs) ** 2
    if d2 == 0.0:
        raise OracleError("coincident points")
    width = math.sqrt(d2 / (r * rs))
    pts = [0.0]
    w = width / 4.0
    while w < math.pi:
        pts.append(w)
        w *= 2.0
    pts.append(math.pi)
    # split oscillatory integrals so each piece holds a few periods
    nm = float(np.max(ns))
    if nm > 8:
        extra = np.linspace(0.0, math.pi, int(nm // 4) + 2)[1:-1]
        pts = sorted(set(pts) | set(extra.tolist()))

    def integrand(t):
        v = _kernel_3d(kind, r, z, rs, zs, nrs, nzs, t, k, nu, x0)
        cs = np.cos(ns * t)
        return np.concatenate([np.real(v) * cs, np.imag(v) * cs, [abs(v)]])

    total = np.zeros(2 * ns.size + 1)
    err = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, e, info = quad_vec(integrand, a, b, epsabs=0.0, epsrel=tol, norm="max", limit=2000,
                                full_output=True)
        # status 2 (rounding detected) is fine: the summed error estimate is checked below
        if info.status not in (0, 2):
            raise OracleError(f"oracle quadrature did not converge on [{a:.3g}, {b:.3g}]")
        total += val
        err += e
    fac = 2.0 / SQRT_2PI
    re = total[: ns.size] * fac
    im = total[ns.size: 2 * ns.size] * fac
    scale = total[-1] * fac
    if err * fac > 10 * tol * max(scale, 1e-300):
        raise OracleError("oracle error estimate above tolerance")
    vals = re + 1j * im if np.any(im != 0.0) else re
    vals = vals if np.ndim(n) else vals[0]
    return (vals, scale) if return_scale else vals


def kernel_case_error(value, oracle_value, scale, floor=1e-3):
    """|k - o| / max(|o|, floor * scale): relative error guarded against cancellation."""
    return abs(value - oracle_value) / max(abs(oracle_value), floor * scale)


def near_kernel_speedup(curve, n_panels=10, n_max=100, n_pairs=12, tol=1e-12, seed=0):
    """Time the recursion path against composite adaptive quadrature on near pairs.

    Pairs are (target node, source node) with the source on the target's
    own or an adjacent panel, drawn with ``seed``. Both routes evaluate the
    Laplace double-layer coefficients n = 0..n_max one pair at a time: the
    recursion through :func:`laplace_double_modal_interior`, the baseline
    through :func:`brute_force_modal_kernel` (all modes in one adaptive
    run). Returns a dict with both times, their ratio and the largest
    discrepancy relative to the integrand size.
    """
    from .modal_kernels import laplace_double_modal_interior

    mesh = build_mesh(curve, n_panels)
    rng = np.random.default_rng(seed)
    ti = rng.integers(0, mesh.n_nodes, size=n_pairs)
    shift = rng.integers(-NODES_PER_PANEL, NODES_PER_PANEL + 1, size=n_pairs)
    shift = np.where(shift == 0, 1, shift)
    tj = np.clip(ti + shift, 0, mesh.n_nodes - 1)
    tj = np.where(tj == ti, ti - np.sign(shift), tj)
    pairs = [((mesh.r[i], mesh.z[i]), (mesh.r[j], mesh.z[j]), (mesh.nr[j], mesh.nz[j])) for i, j in zip(ti, tj)]
    modes = np.arange(n_max + 1)
    # warm both routes once outside the clock
    laplace_double_modal_interior(*pairs[0], n_max)
    brute_force_modal_kernel("laplace_double_interior", *pairs[0], n=1, tol=tol)

    t0 = time.perf_counter()
    fast = [laplace_double_modal_interior(t, s, nrm, n_max).nonnegative for t, s, nrm in pairs]
    t_rec = time.perf_counter() - t0
    t0 = time.perf_counter()
    slow = [brute_force_modal_kernel("laplace_double_interior", t, s, nrm, modes, tol=tol, return_scale=True)
            for t, s, nrm in pairs]
    t_quad = time.perf_counter() - t0
    diff = max(float(np.max(np.abs(f - v))) / sc for f, (v, sc) in zip(fast, slow))
    return {"n_pairs": n_pairs, "n_max": n_max, "t_recursion": t_rec, "t_adaptive": t_quad,
            "ratio": t_quad / t_rec, "max_rel_diff": diff}


ORACLE_KINDS = ("laplace_single", "laplace_double_interior", "laplace_double_exterior", "helmholtz_single",
                "helmholtz_double", "helmholtz_combined", "greens_phi_k")


@dataclass
class KernelCase:
    kind: str
    target: tuple
    source: tuple
    normal: tuple
    modes: np.ndarray
    chi_minus_1: float
    wavenumber: float = 0.0
    coupling: float | None = None
    x0: tuple | None = None

    @property
    def tolerance(self):
        return 1e-10 if self.kind.startswith("laplace") else 1e-9


def random_kernel_cases(n_pairs=125, modes_per_pair=4, seed=0, cm1_range=(1e-6, 49.0), n_max=400,
                        wavenumber_range=(0.5, 15.0)):
    """Random (pair, modes, kind) draws with chi - 1 log-uniform in ``cm1_range``.

    Given r and chi, the source radius r' = q r is drawn from the range of q
    for which (r - r')^2 + (z - z')^2 = 2 r r' (chi - 1) has a real z'.
    Every pair carries ``modes_per_pair`` modes: always one of 0..4, the
    rest uniform in 0..n_max.
    """
    rng = np.random.default_rng(seed)
    cases = []
    for p in range(n_pairs):
        kind = ORACLE_KINDS[p % len(ORACLE_KINDS)]
        cm1 = float(np.exp(rng.uniform(*np.log(cm1_range))))
        r = float(rng.uniform(0.3, 2.0))
        root = math.sqrt(cm1 * (cm1 + 2.0))
        q_lo, q_hi = 1.0 + cm1 - root, 1.0 + cm1 + root
        q = float(np.exp(rng.uniform(math.log(q_lo), math.log(q_hi))))
        dz2 = max(2.0 * q * cm1 - (1.0 - q) ** 2, 0.0)
        z = float(rng.uniform(-0.5, 0.5))
        zs = z + float(rng.choice([-1.0, 1.0])) * r * math.sqrt(dz2)
        rs = q * r
        phi = float(rng.uniform(0.0, TWO_PI))
        normal = (math.cos(phi), math.sin(phi))
        modes = np.concatenate([[rng.integers(0, 5)], rng.integers(0, n_max + 1, size=modes_per_pair - 1)])
        k = float(rng.uniform(*wavenumber_range)) if kind.startswith(("helmholtz", "greens")) else 0.0
        nu = float(rng.uniform(0.5, 2.0)) * k if kind == "helmholtz_combined" else None
        x0 = (0.0, z + float(rng.uniform(0.5, 1.5))) if kind == "laplace_double_exterior" else None
        # the actual chi - 1 after rounding
        cm1 = ((r - rs) ** 2 + (z - zs) ** 2) / (2.0 * r * rs)
        cases.append(KernelCase(kind, (r, z), (rs, zs), normal, np.sort(modes).astype(int), cm1, k, nu, x0))
    return cases


def kernel_oracle_suite(cases, oracle_tol=1e-13):
    """Compare the recursion/convolution and FFT paths with the quadrature oracle.

    Returns one dict per (pair, mode): the kind, chi - 1, n, both path
    errors (see :func:`kernel_case_error`), the tolerance and the FFT path
    tag actually used.
    """
    from .modal_kernels import modal_kernel, modal_kernels_fft

    rows = []
    for c in cases:
        n_top = int(np.max(c.modes))
        kw = dict(wavenumber=c.wavenumber, coupling=c.coupling, x0=c.x0)
        rec = modal_kernel(c.kind, c.target, c.source, c.normal, n_top, **kw)
        fft = modal_kernels_fft(c.kind, c.target, c.source, c.normal, n_top, **kw)
        oracle, scale = brute_force_modal_kernel(c.kind, c.target, c.source, c.normal, c.modes, c.wavenumber,
                                                 c.coupling, c.x0, tol=oracle_tol, return_scale=True)
        for n, o in zip(c.modes, np.atleast_1d(oracle)):
            rows.append({"kind": c.kind, "chi_minus_1": c.chi_minus_1, "n": int(n), "wavenumber": c.wavenumber,
                         "err_recursion": kernel_case_error(rec.at(n), o, scale),
                         "err_fft": kernel_case_error(fft.at(n), o, scale),
                         "fft_path": fft.path_tag, "tolerance": c.tolerance})
    return rows


# -- convenience -----------------------------------------------------------------------------

@dataclass
class SweepCell:
    n_panels: int
    modes: int
    rel_linf: float = float("nan")
    timings: dict = field(default_factory=dict)
    error: str | None = None


def laplace_spec(side="interior", **kw):
    return ProblemSpec(equation="laplace", side=side, **kw)


def helmholtz_spec(wavenumber, coupling=None, **kw):
    return ProblemSpec(equation="helmholtz", side="exterior", wavenumber=wavenumber, coupling=coupling, **kw)


def wavelengths_to_wavenumber(wavelengths, diameter):
    """k such that ``wavelengths`` wavelengths fit across ``diameter``."""
    return TWO_PI * wavelengths / diameter
