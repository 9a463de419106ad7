import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from axibie.constants import SQRT_2PI
from axibie.errors import ConditioningError, ConfigError, ResolutionError
from axibie.geometry import build_mesh, circle_torus, ellipse, sphere
from axibie.harness import ChargeOracle, laplace_spec, oracle_boundary_data, random_charges
from axibie.solver import (
    ModalStack,
    ProblemSpec,
    assemble,
    choose_truncation,
    evaluate_potential,
    factor,
    reconstruct,
    residuals,
    solve,
    solve_modes,
    theta_grid,
    transform_rhs,
)


@pytest.fixture(scope="module")
def sphere_stack():
    mesh = build_mesh(sphere(), 5)
    return assemble(mesh, ProblemSpec(), 12)


def test_problem_spec_validation():
    assert ProblemSpec().identity_coefficient == -0.5
    assert ProblemSpec("laplace", "exterior").identity_coefficient == -0.5
    h = ProblemSpec("helmholtz", "exterior", wavenumber=2.0)
    assert h.identity_coefficient == 0.5 and h.nu == 2.0 and h.is_complex
    assert ProblemSpec("helmholtz", "exterior", wavenumber=2.0, coupling=1.0).nu == 1.0
    for bad in (dict(equation="wave"), dict(side="inside"), dict(equation="helmholtz", side="interior"),
                dict(wavenumber=-1.0), dict(x0=(0.2, 0.0)), dict(quad_tol=0.0), dict(oversample=1),
                dict(audit_fraction=2.0)):
        with pytest.raises(ConfigError):
            ProblemSpec(**bad)
    with pytest.raises(ConfigError):
        ProblemSpec("laplace", "exterior").kernel(circle_torus())
    with pytest.raises(ConfigError):
        ProblemSpec("laplace", "exterior", x0=(0.0, 5.0)).kernel(sphere())
    assert ProblemSpec("laplace", "exterior").resolve_x0(sphere()) == pytest.approx((0.0, 0.0), abs=1e-14)


def test_transform_constant():
    f = np.ones((16, 3))
    fn = transform_rhs(f, 4)
    expect = np.zeros((9, 3))
    expect[4] = SQRT_2PI
    np.testing.assert_allclose(fn, expect, atol=1e-15)
    with pytest.raises(ResolutionError):
        transform_rhs(np.ones((8, 3)), 4)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 30), st.integers(0, 2**31 - 1))
def test_transform_round_trip_and_parseval(N, seed):
    rng = np.random.default_rng(seed)
    M = 2 * (2 * N + 1) + 3
    coef = rng.normal(size=(2 * N + 1, 4)) + 1j * rng.normal(size=(2 * N + 1, 4))
    f = reconstruct(coef, M)
    back = transform_rhs(f, N)
    np.testing.assert_allclose(back, coef, atol=1e-13 * np.max(np.abs(coef)))
    grid_norm = np.sum(np.abs(f) ** 2) * (2 * math.pi / M)
    assert np.sum(np.abs(back) ** 2) == pytest.approx(grid_norm, rel=1e-13)


def test_choose_truncation_examples():
    th = theta_grid(64)[:, None]
    phi = np.array([[1.0, 0.5, 2.0]])
    assert choose_truncation(np.broadcast_to(phi, (64, 3)), 1e-12)[0] == 0
    assert choose_truncation(np.cos(3 * th) * phi, 1e-12)[0] == 3
    with pytest.raises(ResolutionError):
        choose_truncation(np.exp(30 * np.cos(th)) * phi, 1e-12)
    # the tail is summed exactly below the rounding level of the total energy
    f = (1 + 1e-9 * np.cos(5 * th)) * phi
    assert choose_truncation(f, 1e-12)[0] == 5
    assert choose_truncation(f, 1e-8)[0] == 0


def test_choose_truncation_grows_as_charge_approaches():
    mesh = build_mesh(sphere(), 4)
    Ns = []
    for d in (3.0, 1.6, 1.2):
        oracle = ChargeOracle(np.array([[d, 0.0, 0.0]]), np.array([1.0]))
        f = oracle_boundary_data(oracle, mesh, 512)
        Ns.append(choose_truncation(f, 1e-10, mesh.r * mesh.w)[0])
    assert Ns[0] < Ns[1] < Ns[2]


def test_identity_hook_and_factor_methods():
    I, c = 6, -0.5
    mats = np.broadcast_to(c * np.eye(I), (3, I, I)).copy()
    stack = ModalStack(mesh=None, spec=ProblemSpec(), n_max=2, matrices=mats)
    fn = np.random.default_rng(0).normal(size=(5, I))
    for method in ("lu", "inverse"):
        sig = solve_modes(factor(stack, method=method), fn)
        np.testing.assert_allclose(sig, fn / c, rtol=1e-15)


def test_random_system_residual_and_lu_reconstruction():
    rng = np.random.default_rng(1)
    I = 40
    mats = np.stack([np.eye(I) * 2 + rng.normal(size=(I, I)) / math.sqrt(I) for _ in range(4)])
    stack = ModalStack(mesh=None, spec=ProblemSpec(), n_max=3, matrices=mats)
    fn = rng.normal(size=(7, I))
    f_lu = factor(stack, "lu", workers=2)
    f_inv = factor(stack, "inverse")
    s1 = solve_modes(f_lu, fn)
    s2 = solve_modes(f_inv, fn)
    assert np.max(residuals(stack, s1, fn)) <= 1e-12
    np.testing.assert_allclose(s1, s2, atol=1e-12)
    for n in range(4):
        lu, piv = f_lu.lu[n]
        L = np.tril(lu, -1) + np.eye(I)
        U = np.triu(lu)
        P = np.eye(I)
        for k, p in enumerate(piv):
            P[[k, p]] = P[[p, k]]
        assert np.max(np.abs(P.T @ L @ U - mats[n])) <= 1e-12 * np.max(np.abs(mats[n]))


@pytest.mark.filterwarnings("ignore::scipy.linalg.LinAlgWarning")
def test_singular_mode_reports_conditioning():
    mats = np.stack([np.eye(4), np.diag([1.0, 1.0, 1.0, 0.0])])
    stack = ModalStack(mesh=None, spec=ProblemSpec(), n_max=1, matrices=mats)
    for method in ("lu", "inverse"):
        with pytest.raises(ConditioningError) as exc:
            factor(stack, method=method)
        assert exc.value.mode == 1


def test_sphere_gauss_identity_and_decay(sphere_stack):
    A0 = sphere_stack.operator(0)
    np.testing.assert_allclose(A0.sum(axis=1), -0.5, atol=1e-10)
    norms = [np.max(np.sum(np.abs(sphere_stack.operator(n)), axis=1)) for n in (0, 6, 12)]
    assert norms[0] > norms[1] > norms[2]


def test_operator_decay_at_mode_200():
    # on the unit sphere the double layer acts on degree-l harmonics by -1/(2(2l+1)); mode n
    # holds l >= n, so the spectral radius of A^(n) is 1/(2(2n+1)) and decays like 1/n
    stack = assemble(build_mesh(sphere(), 10), ProblemSpec(), 200)
    norms = {}
    for n in (0, 50, 200):
        A = stack.operator(n)
        rho = np.max(np.abs(np.linalg.eigvals(A)))
        assert rho == pytest.approx(1 / (2 * (2 * n + 1)), rel=1e-5)
        norms[n] = np.max(np.sum(np.abs(A), axis=1))
        assert norms[n] >= rho * (1 - 1e-12)
    assert norms[0] > norms[50] > norms[200]
    assert norms[200] < 5e-3 * norms[0]


def test_sphere_reflection_symmetry(sphere_stack):
    I = sphere_stack.matrices.shape[1]
    flip = np.arange(I)[::-1]
    for n in (0, 5, 12):
        A = sphere_stack.operator(n)
        np.testing.assert_allclose(A[np.ix_(flip, flip)], A, rtol=0, atol=1e-12 * np.max(np.abs(A)))


def test_helmholtz_zero_wavenumber_matches_laplace():
    mesh = build_mesh(ellipse(), 5)
    lap = assemble(mesh, ProblemSpec(), 6)
    hel = assemble(mesh, ProblemSpec("helmholtz", "exterior", wavenumber=0.0, coupling=0.0), 6)
    for n in range(7):
        A = lap.operator(n)
        np.testing.assert_allclose(hel.operator(n), A, rtol=0, atol=1e-10 * np.max(np.abs(A)))
    assert np.allclose(np.diag(hel.matrices[0] - hel.operator(0)), 0.5)


def _charge_data(mesh, side, M, equation="laplace", k=0.0):
    curve = mesh.curve
    oracle = random_charges(curve, side, equation, k, seed=4)
    return oracle, oracle_boundary_data(oracle, mesh, M)


def test_mode_decoupling_and_conjugation(sphere_stack):
    mesh = sphere_stack.mesh
    th = theta_grid(40)[:, None]
    fac = factor(sphere_stack)
    for n0 in (0, 3, 7):
        f = np.cos(n0 * th) * (1 + mesh.z)[None, :] + 0j
        fn = transform_rhs(f, 12)
        sig = solve_modes(fac, fn)
        energy = np.sum(np.abs(sig) ** 2, axis=1)
        keep = np.zeros(25, dtype=bool)
        keep[[12 + n0, 12 - n0]] = True
        assert np.sum(energy[~keep]) <= 1e-24 * np.sum(energy)
        grid = reconstruct(sig, 40)
        assert np.max(np.abs(grid.imag)) <= 1e-13 * np.max(np.abs(grid.real))


def test_solve_interior_point_charges_and_determinism():
    mesh = build_mesh(sphere(), 10)
    oracle, f = _charge_data(mesh, "interior", 256)
    res = solve(mesh, ProblemSpec(), f, eps=1e-12)
    assert res.diagnostics["max_residual"] <= 1e-12
    pts = np.array([[0.1, 0.2, 0.3], [-0.2, 0.0, -0.4], [0.0, 0.0, 0.0]])
    u = evaluate_potential(res, pts)
    exact = oracle.potential(pts)
    assert np.max(np.abs(u - exact)) <= 1e-9 * np.max(np.abs(exact))
    again = solve(mesh, ProblemSpec(), f, eps=1e-12)
    assert again.n_max == res.n_max
    assert np.array_equal(again.sigma_n, res.sigma_n)


def test_evaluate_potential_matches_direct_tensor_sum():
    mesh = build_mesh(ellipse(), 6)
    _, f = _charge_data(mesh, "interior", 32)
    res = solve(mesh, ProblemSpec(), f, n_max=8)
    pts = np.array([[0.05, 0.0, 0.1], [0.0, 0.08, -0.5]])
    M = 64
    with pytest.warns(RuntimeWarning):  # the ellipse is thin: both targets sit within a panel length
        u = evaluate_potential(res, pts, M_eval=M)
    sig = res.sigma_grid(M)
    th = theta_grid(M)
    total = np.zeros(len(pts))
    for m in range(M):
        y = np.column_stack([mesh.r * math.cos(th[m]), mesh.r * math.sin(th[m]), mesh.z])
        ny = np.column_stack([mesh.nr * math.cos(th[m]), mesh.nr * math.sin(th[m]), mesh.nz])
        for p, x in enumerate(pts):
            d = x - y
            R = np.linalg.norm(d, axis=1)
            ker = np.sum(ny * d, axis=1) / (4 * math.pi * R**3)
            total[p] += np.sum(ker * sig[m] * mesh.r * mesh.w) * 2 * math.pi / M
    np.testing.assert_allclose(u, total, rtol=1e-12)
    zero = res.__class__(mesh=mesh, spec=res.spec, n_max=8, sigma_n=np.zeros_like(res.sigma_n))
    assert np.all(evaluate_potential(zero, pts) == 0)
    with pytest.warns(RuntimeWarning):
        evaluate_potential(res, np.array([[0.0, 0.0, 0.999]]))


def test_exterior_laplace_solve():
    mesh = build_mesh(ellipse(), 10)
    oracle, f = _charge_data(mesh, "exterior", 64)
    spec = laplace_spec("exterior")
    res = solve(mesh, spec, f, n_max=12)
    pts = np.array([[3.0, 0.0, 0.5], [0.0, -2.5, -1.0]])
    u = evaluate_potential(res, pts)
    exact = oracle.potential(pts)
    assert np.max(np.abs(u - exact)) <= 1e-9 * np.max(np.abs(exact))


def test_solve_rejects_bad_data():
    mesh = build_mesh(sphere(), 2)
    with pytest.raises(ConfigError):
        solve(mesh, ProblemSpec(), np.ones((8, 7)))
    with pytest.raises(ConfigError):
        assemble(mesh, ProblemSpec(), -1)
    stack = assemble(mesh, ProblemSpec(), 2)
    with pytest.raises(ConfigError):
        solve_modes(factor(stack), np.ones((7, mesh.n_nodes)))
    with pytest.raises(ConfigError):
        factor(stack, method="qr")
    assert isinstance(scipy.linalg.norm(stack.matrices[0]), float)
