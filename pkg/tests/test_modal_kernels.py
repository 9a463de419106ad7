import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from axibie.constants import INV_4PI, SQRT_2PI, SQRT_8PI3
from axibie.errors import AxisDegenerateError, ConfigError, DiagonalEvaluationError, DomainError, ResolutionError
from axibie.harness import brute_force_modal_kernel, kernel_case_error
from axibie.modal_kernels import (
    KERNEL_KINDS,
    fourier_coeffs,
    greens_modal,
    helmholtz_modal,
    laplace_double_modal_exterior,
    laplace_double_modal_interior,
    laplace_single_modal,
    modal_kernel,
    modal_kernels_fft,
    product_modal,
    smooth_part_modal,
)
from axibie.specfun import legendre_q_seq

# (1/sqrt(2 pi)) int_T d theta / (4 pi |x - x'|) for (1, 0), (1, 0.5); mpmath at 30 digits
S0_SPEC_PAIR = 0.17433695993439469335


def oracle_errors(seq, kind, target, source, normal=None, k=0.0, nu=None, x0=None):
    n = np.arange(seq.n_max + 1)
    ref, scale = brute_force_modal_kernel(kind, target, source, normal, n, k, nu, x0, return_scale=True)
    return np.array([kernel_case_error(v, o, scale) for v, o in zip(seq.nonnegative, ref)])


def test_single_layer_spec_pair():
    seq = laplace_single_modal((1.0, 0.0), (1.0, 0.5), 0)
    q = legendre_q_seq(1.125, 0).values[0]
    assert seq.at(0) == pytest.approx(q / SQRT_8PI3, rel=1e-15)
    assert seq.at(0) == pytest.approx(S0_SPEC_PAIR, rel=1e-14)
    assert seq.path_tag == "recursion"


def test_single_layer_true_relative_accuracy():
    # mpmath Q values give a cancellation-free reference for every n
    t, s = (2.0, 1.0), (0.5, -0.3)
    seq = laplace_single_modal(t, s, 100)
    mpmath.mp.dps = 30
    chi = mpmath.mpf(1) + mpmath.mpf(((2 - 0.5) ** 2 + 1.3**2) / (2 * 2 * 0.5))
    for n in (0, 1, 7, 40, 100):
        ref = float(mpmath.legenq(n - 0.5, 0, chi, type=3).real) / (SQRT_8PI3 * 1.0)
        assert seq.at(n) == pytest.approx(ref, rel=1e-11)
        assert seq.at(-n) == seq.at(n)
    assert np.max(oracle_errors(seq, "laplace_single", t, s)) <= 1e-10


def test_single_layer_positive_decreasing_and_symmetric():
    a = laplace_single_modal((1.3, 0.2), (0.7, -0.4), 60)
    b = laplace_single_modal((0.7, -0.4), (1.3, 0.2), 60)
    v = a.nonnegative
    assert np.all(v > 0) and np.all(np.diff(v) < 0)
    assert np.array_equal(a.values, b.values)


def test_single_layer_decay_ratio():
    t, s = (1.0, 0.0), (2.0, 0.5)
    chi = (1 + 4 + 0.25) / 4
    seq = laplace_single_modal(t, s, 200)
    assert seq.at(200) / seq.at(199) == pytest.approx(1 / (chi + math.sqrt(chi * chi - 1)), rel=0.05)


def test_single_layer_log_singularity():
    # s_0 ~ -log(chi - 1) / (2 sqrt(8 pi^3) r) as the pair closes in
    ratios = []
    for d in (1e-4, 1e-8, 1e-12):
        seq = laplace_single_modal((1.0, 0.0), (1.0, d), 0)
        ratios.append(seq.at(0) / abs(math.log(d * d / 2)))
    limit = 1 / (2 * SQRT_8PI3)
    gaps = [abs(x - limit) for x in ratios]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.1 * limit


def test_double_layer_interior_oracle():
    t, s, nrm = (1.2, 0.1), (1.0, -0.2), (0.6, 0.8)
    seq = laplace_double_modal_interior(t, s, nrm, 50)
    assert np.max(oracle_errors(seq, "laplace_double_interior", t, s, nrm)) <= 1e-10


def test_double_layer_flat_configuration():
    # r = r', z = z' and a normal along z: grad chi . n' vanishes identically
    seq = laplace_double_modal_interior((1.0, 0.3), (1.4, 0.3), (0.0, 1.0), 20)
    assert np.all(seq.values == 0.0)


def test_double_layer_exterior_monopole():
    t, s, nrm, x0 = (0.8, 0.4), (1.0, -0.1), (0.6, -0.8), (0.0, 0.2)
    ext = laplace_double_modal_exterior(t, s, nrm, x0, 10)
    inn = laplace_double_modal_interior(t, s, nrm, 10)
    mono = ext.nonnegative + inn.nonnegative
    assert mono[0] == pytest.approx(SQRT_2PI * INV_4PI / math.hypot(0.8, 0.2), rel=1e-14)
    np.testing.assert_array_equal(mono[1:], 0.0)
    assert np.max(oracle_errors(ext, "laplace_double_exterior", t, s, nrm, x0=x0)) <= 1e-10
    with pytest.raises(ConfigError):
        laplace_double_modal_exterior(t, s, nrm, (0.1, 0.2), 10)


def test_pair_errors():
    with pytest.raises(DiagonalEvaluationError):
        laplace_single_modal((1.0, 0.0), (1.0, 0.0), 3)
    with pytest.raises(AxisDegenerateError):
        laplace_single_modal((0.0, 0.0), (1.0, 0.0), 3)
    with pytest.raises(ConfigError):
        helmholtz_modal("double", 1.0, (1.0, 0.0), (1.0, 0.5), None, 3)
    with pytest.raises(ConfigError):
        modal_kernels_fft("yukawa", (1.0, 0.0), (1.0, 0.5), n_max=3)


def test_smooth_part_trivial():
    one = smooth_part_modal(lambda t: np.ones_like(t), 6)
    expect = np.zeros(13)
    expect[6] = SQRT_2PI
    np.testing.assert_allclose(one, expect, atol=1e-15)
    cos = smooth_part_modal(np.cos, 6)
    expect = np.zeros(13)
    expect[5] = expect[7] = math.sqrt(math.pi / 2)
    np.testing.assert_allclose(cos, expect, atol=1e-15)
    with pytest.raises(ResolutionError):
        smooth_part_modal(lambda t: np.exp(30 * np.cos(t)), 8, oversample=1)


def test_smooth_part_helmholtz_factor():
    k, r, z, rs, zs = 3.0, 1.0, 0.0, 2.0, 1.5

    def R(t):
        return np.sqrt(r * r + rs * rs - 2 * r * rs * np.cos(t) + (z - zs) ** 2)

    g = smooth_part_modal(lambda t: np.exp(1j * k * R(t)), 40)
    mpmath.mp.dps = 20
    for n in (0, 3, 10):
        f = lambda t: mpmath.exp(1j * k * mpmath.sqrt(r * r + rs * rs - 2 * r * rs * mpmath.cos(t) + (z - zs) ** 2))
        ref = mpmath.quad(lambda t: f(t) * mpmath.cos(n * t), [0, mpmath.pi]) * 2 / math.sqrt(2 * math.pi)
        assert abs(g[40 + n] - complex(ref)) <= 1e-12 * max(abs(complex(ref)), 1e-3)


def test_product_modal_identities():
    s = np.random.default_rng(3).normal(size=21)
    s = s + s[::-1]
    delta = np.array([0.0, SQRT_2PI, 0.0])
    np.testing.assert_allclose(product_modal(s, delta, 9), s[1:-1], rtol=1e-15)
    a = np.zeros(11)
    a[5 + 2] = 1.0
    b = np.zeros(5)
    b[2 + 1] = 2.0
    out = product_modal(a, b, 4, method="fft")
    expect = np.zeros(9)
    expect[4 + 3] = 2.0 / SQRT_2PI
    np.testing.assert_allclose(out, expect, atol=1e-15)
    np.testing.assert_allclose(product_modal(a, b, 4), expect, atol=1e-15)
    with pytest.raises(DomainError):
        product_modal(a, b, 6)


def test_product_modal_fft_matches_direct():
    rng = np.random.default_rng(5)
    n = np.arange(-40, 41)
    s = np.exp(-0.2 * np.abs(n)) * (1 + 0.1 * rng.normal(size=81))
    g = np.exp(-0.5 * np.abs(np.arange(-8, 9))) + 0.3j
    np.testing.assert_allclose(product_modal(s, g, 30, "fft"), product_modal(s, g, 30), atol=1e-15)


def test_helmholtz_zero_wavenumber_reduces_to_laplace():
    t, s, nrm = (1.1, 0.2), (0.9, -0.1), (0.28, 0.96)
    single = helmholtz_modal("single", 0.0, t, s, None, 40)
    assert np.array_equal(single.values, laplace_single_modal(t, s, 40).values)
    double = helmholtz_modal("double", 0.0, t, s, nrm, 40)
    lap = laplace_double_modal_interior(t, s, nrm, 40).values
    np.testing.assert_allclose(double.values, lap, rtol=1e-12, atol=1e-12 * np.max(np.abs(lap)))
    comb = helmholtz_modal("combined", 0.0, t, s, nrm, 40, coupling=0.0 + 1e-300)
    np.testing.assert_allclose(comb.values, lap, rtol=1e-12, atol=1e-12 * np.max(np.abs(lap)))
    assert np.array_equal(greens_modal(0.0, t, s, 40).values, single.values)


def test_helmholtz_evenness():
    seq = helmholtz_modal("combined", 6.0, (1.0, 0.0), (0.8, 0.3), (0.6, 0.8), 30, coupling=6.0)
    np.testing.assert_array_equal(seq.values, seq.values[::-1])
    assert seq.path_tag == "convolution"


@pytest.mark.parametrize("kind", ["single", "double", "combined"])
def test_helmholtz_near_pair_oracle(kind):
    t, s, nrm, k = (1.0, 0.0), (1.0, 0.01), (1.0, 0.0), 10.0
    normal = None if kind == "single" else nrm
    seq = helmholtz_modal(kind, k, t, s, normal, 200, coupling=k)
    err = oracle_errors(seq, "helmholtz_" + kind, t, s, normal, k, k)
    assert np.max(err) <= 1e-9


def test_greens_modal_pde_residual():
    k, rs, zs, n = 4.0, 1.0, 0.0, 3
    h = 1e-3

    def phi(r, z):
        return greens_modal(k, (r, z), (rs, zs), n).at(n)

    def residual(r, z, h):
        c = phi(r, z)
        urr = (phi(r + h, z) - 2 * c + phi(r - h, z)) / h**2
        ur = (phi(r + h, z) - phi(r - h, z)) / (2 * h)
        uzz = (phi(r, z + h) - 2 * c + phi(r, z - h)) / h**2
        return -urr - ur / r - uzz + (n * n / r**2 - k * k) * c, c

    r, z = 1.6, 0.4
    res_h, c = residual(r, z, h)
    res_2h, _ = residual(r, z, 2 * h)
    # second-order stencils at h and 2h, Richardson-combined to fourth order
    res = (4 * res_h - res_2h) / 3
    assert abs(res) <= 1e-6 * abs(c)
    assert abs(res_h) > abs(res)


def test_fft_path_well_separated():
    t, s, nrm = (1.0, 0.0), (1.5, 2.0), (0.6, 0.8)
    f = modal_kernels_fft("laplace_double_interior", t, s, nrm, 30)
    rec = laplace_double_modal_interior(t, s, nrm, 30)
    assert f.path_tag == "fft"
    np.testing.assert_allclose(f.values, rec.values, rtol=1e-11, atol=1e-11 * np.max(np.abs(rec.values)))
    f = modal_kernels_fft("helmholtz_single", t, s, None, 30, wavenumber=5.0)
    conv = helmholtz_modal("single", 5.0, t, s, None, 30)
    np.testing.assert_allclose(f.values, conv.values, rtol=0, atol=1e-10 * np.max(np.abs(conv.values)))


def test_fft_constant_kernel_only_mode_zero():
    c = fourier_coeffs(np.full(64, 2.5), 10)
    assert c[0] == pytest.approx(2.5 * SQRT_2PI, rel=1e-15)
    np.testing.assert_allclose(c[1:], 0.0, atol=1e-15)


def test_fft_guard_escalates_near_pairs():
    t, s = (1.0, 0.0), (1.0, 1e-7)
    f = modal_kernels_fft("laplace_single", t, s, None, 50)
    assert f.path_tag == "recursion"
    np.testing.assert_array_equal(f.values, laplace_single_modal(t, s, 50).values)


pair = st.tuples(st.floats(0.2, 3.0), st.floats(-2.0, 2.0))


@settings(max_examples=25, deadline=None)
@given(pair, pair, st.floats(0, 2 * math.pi), st.sampled_from(KERNEL_KINDS))
def test_path_consistency(t, s, ang, kind):
    # separated pairs, where both paths are valid
    if math.hypot(t[0] - s[0], t[1] - s[1]) < 0.3:
        return
    nrm = (math.cos(ang), math.sin(ang))
    k = 0.0 if kind.startswith("laplace") else 3.0
    kw = dict(wavenumber=k, coupling=k if kind == "helmholtz_combined" else None)
    x0 = (0.0, 0.0) if kind == "laplace_double_exterior" else None
    a = modal_kernel(kind, t, s, nrm, 40, x0=x0, **kw)
    b = modal_kernels_fft(kind, t, s, nrm, 40, x0=x0, audit=False, **kw)
    assert np.array_equal(a.values, a.values[::-1])
    scale = np.max(np.abs(a.values))
    np.testing.assert_allclose(b.values, a.values, rtol=1e-9, atol=1e-12 * scale)
