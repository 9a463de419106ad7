import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from axibie.errors import AxisDegenerateError, DiagonalEvaluationError, DomainError, EllipticDivergence
from axibie.specfun import (
    ChiArgument,
    chi_from_coords,
    elliptic_E,
    elliptic_K,
    legendre_q_raw,
    legendre_q_seq,
)

# frozen from mpmath at 40 digits
K_HALF = 1.6857503548125960429
E_HALF = 1.4674622093394271555
Q_MINUS_HALF_1125 = 2.7457391180897536720
Q_CHI3 = {0: 1.3110287771460599052, 1: 0.11288854241046769779, 2: 0.014544577259850822759,
          50: 5.5473255764014596658e-40}


def test_elliptic_trivial_values():
    assert elliptic_K(0.0) == pytest.approx(math.pi / 2, rel=1e-16)
    assert elliptic_E(0.0) == pytest.approx(math.pi / 2, rel=1e-16)
    assert elliptic_E(1.0) == pytest.approx(1.0, rel=1e-15)


def test_elliptic_modulus_convention_locked():
    # modulus 0.5, i.e. parameter 0.25; scipy.special.ellipk(0.5) would be the other convention
    assert elliptic_K(0.5) == pytest.approx(K_HALF, rel=1e-15)
    assert elliptic_E(0.5) == pytest.approx(E_HALF, rel=1e-15)


def test_elliptic_domain_errors():
    with pytest.raises(EllipticDivergence):
        elliptic_K(1.0)
    for bad in (-0.1, 1.5, np.nan):
        with pytest.raises(DomainError):
            elliptic_K(bad)
        with pytest.raises(DomainError):
            elliptic_E(bad)


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=0.0, max_value=0.999999))
def test_elliptic_against_defining_integrals(mu):
    mpmath.mp.dps = 30
    m = mpmath.mpf(mu) ** 2
    K = mpmath.quad(lambda t: 1 / mpmath.sqrt(1 - m * mpmath.sin(t) ** 2), [0, mpmath.pi / 4, mpmath.pi / 2])
    E = mpmath.quad(lambda t: mpmath.sqrt(1 - m * mpmath.sin(t) ** 2), [0, mpmath.pi / 4, mpmath.pi / 2])
    assert elliptic_K(mu) == pytest.approx(float(K), rel=1e-14)
    assert elliptic_E(mu) == pytest.approx(float(E), rel=1e-14)


def test_elliptic_complementary_modulus_near_one():
    mu_c = 1e-200
    mu = math.sqrt(1 - mu_c**2)
    # K ~ ln(4/mu_c) as mu_c -> 0
    assert elliptic_K(mu, mu_c) == pytest.approx(math.log(4 / mu_c), rel=1e-14)
    assert elliptic_E(mu, mu_c) == pytest.approx(1.0, rel=1e-15)


def test_chi_from_coords_examples():
    assert float(chi_from_coords(1, 0, 1, 0.5).chi) == pytest.approx(1.125, rel=1e-16)
    assert float(chi_from_coords(2, 0, 1, 0).chi) == pytest.approx(1.25, rel=1e-16)
    with pytest.raises(DiagonalEvaluationError):
        chi_from_coords(1.0, 0.3, 1.0, 0.3)
    with pytest.raises(AxisDegenerateError):
        chi_from_coords(0.0, 0.0, 1.0, 0.0)


@given(st.floats(0.01, 10), st.floats(-5, 5), st.floats(0.01, 10), st.floats(-5, 5))
def test_chi_swap_symmetry(r, z, rs, zs):
    assume(abs(r - rs) + abs(z - zs) > 1e-100)
    a = chi_from_coords(r, z, rs, zs)
    b = chi_from_coords(rs, zs, r, z)
    assert float(a.chi_minus_1) == float(b.chi_minus_1)
    assert float(a.chi) == pytest.approx(1.0 + float(a.chi_minus_1), rel=1e-16)


def test_chi_argument_rejects_nonpositive():
    with pytest.raises(DomainError):
        ChiArgument.from_chi(1.0)
    with pytest.raises(DomainError):
        legendre_q_seq(0.5, 3)


def test_seed_values():
    seq = legendre_q_seq(1.125, 0)
    mu = math.sqrt(2 / 2.125)
    assert seq.values[0] == pytest.approx(mu * elliptic_K(mu), rel=1e-15)
    assert seq.values[0] == pytest.approx(Q_MINUS_HALF_1125, rel=1e-14)


def test_chi3_values_and_method_cross_check():
    fw = legendre_q_seq(3.0, 50, method="forward").values
    bw = legendre_q_seq(3.0, 50, method="backward").values
    for n in (0, 1, 2):
        assert fw[n] == pytest.approx(Q_CHI3[n], rel=1e-14)
        assert bw[n] == pytest.approx(Q_CHI3[n], rel=1e-14)
    # forward rounding grows like exp(2 n acosh chi): about 1e-16 e^{3.5 n}
    n = np.arange(51)
    growth = 1e-15 * np.exp(2 * n * np.arccosh(3.0))
    ok = growth <= 1e-10
    np.testing.assert_allclose(fw[ok], bw[ok], rtol=1e-10)
    assert not np.allclose(fw[20:], bw[20:], rtol=1e-3)
    assert bw[50] == pytest.approx(Q_CHI3[50], rel=1e-13)
    assert legendre_q_seq(3.0, 50).method_tag == "backward"


def test_forward_backward_agree_where_both_stable():
    fw = legendre_q_seq(1.001, 50, method="forward").values
    bw = legendre_q_seq(1.001, 50, method="backward").values
    np.testing.assert_allclose(fw, bw, rtol=1e-12)
    assert legendre_q_seq(1.001, 50).method_tag == "forward"


@settings(max_examples=60, deadline=None)
@given(st.floats(math.log(1e-6), math.log(49.0)), st.integers(0, 400))
def test_oracle_equivalence_mpmath(log_cm1, n):
    cm1 = math.exp(log_cm1)
    q = legendre_q_raw(np.array([cm1]), n)[0][0]
    mpmath.mp.dps = 30
    chi = mpmath.mpf(1) + mpmath.mpf(cm1)
    ref = mpmath.legenq(n - 0.5, 0, chi, type=3).real
    assert abs(q[n] - float(ref)) <= 1e-11 * abs(float(ref))


@settings(max_examples=40, deadline=None)
@given(st.floats(math.log(1e-6), math.log(49.0)), st.integers(2, 400))
def test_positive_decreasing_recurrence(log_cm1, n_max):
    chi = 1 + math.exp(log_cm1)
    q = legendre_q_seq(chi, n_max).values
    normal = q > 1e-290  # the tail underflows for large chi and n
    assert np.all(q[normal] > 0) and np.all(q >= 0)
    assert np.all(np.diff(q[normal]) < 0)
    n = np.arange(2, n_max + 1)
    res = q[2:] - 4 * (n - 1) / (2 * n - 1) * chi * q[1:-1] + (2 * n - 3) / (2 * n - 1) * q[:-2]
    m = normal[2:]
    assert np.all(np.abs(res[m]) <= 1e-12 * q[:-2][m])


@settings(max_examples=30, deadline=None)
@given(st.floats(math.log(1e-6), math.log(49.0)), st.integers(0, 60))
def test_derivative_matches_finite_difference(log_cm1, n):
    chi = 1 + math.exp(log_cm1)
    seq = legendre_q_seq(chi, n, want_derivs=True)
    # step 1e-6 chi, shrunk near chi = 1 where Q has a log singularity
    h = 1e-6 * min(chi, chi - 1)
    hi = legendre_q_seq(ChiArgument.from_chi_minus_1(chi - 1 + h), n).values[n]
    lo = legendre_q_seq(ChiArgument.from_chi_minus_1(chi - 1 - h), n).values[n]
    fd = (hi - lo) / (2 * h)
    assert seq.derivs[n] == pytest.approx(fd, rel=1e-6)


@given(st.floats(1.001, 40), st.integers(0, 200), st.integers(0, 200))
@settings(max_examples=30, deadline=None)
def test_symmetry_and_prefix_invariance(chi, n1, extra):
    short = legendre_q_seq(chi, n1)
    long = legendre_q_seq(chi, n1 + extra)
    np.testing.assert_allclose(long.values[: n1 + 1], short.values, rtol=1e-13)
    assert short.at(-n1) == short.at(n1)


@pytest.mark.parametrize("chi", [1.5, 3.0, 5.0])
def test_decay_ratio(chi):
    q = legendre_q_seq(chi, 200).values
    assert q[200] > 1e-290
    limit = 1 / (chi + math.sqrt(chi * chi - 1))
    assert q[200] / q[199] == pytest.approx(limit, rel=1e-2)


def test_near_singular_seed_accuracy():
    cm1 = 1e-12
    mpmath.mp.dps = 40
    ref = mpmath.legenq(-0.5, 0, 1 + mpmath.mpf(cm1), type=3).real
    assert legendre_q_raw(np.array([cm1]), 0)[0][0, 0] == pytest.approx(float(ref), rel=1e-14)


def test_miller_offset_verified():
    cm1 = np.array([0.02, 0.5, 5.0, 40.0])
    plain = legendre_q_raw(cm1, 300, method="backward")[0]
    checked = legendre_q_raw(cm1, 300, method="backward", verify=True)[0]
    np.testing.assert_allclose(plain, checked, rtol=1e-14, atol=0)


def test_vector_matches_scalar_path():
    cm1 = np.geomspace(1e-6, 49, 9)
    batch = legendre_q_raw(cm1, 120, want_derivs=True)
    for i, c in enumerate(cm1):
        one = legendre_q_raw(np.array([c]), 120, want_derivs=True)
        np.testing.assert_allclose(one[0][0], batch[0][i], rtol=1e-14)
        np.testing.assert_allclose(one[1][0], batch[1][i], rtol=1e-13)
