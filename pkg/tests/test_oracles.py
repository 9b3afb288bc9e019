import warnings

import numpy as np
import pytest
from scipy import integrate, special

from spectralkernel.errors import InvalidArgumentError, PoleError, PrecisionEscalation
from spectralkernel.models import ExponentialTest, Matern, SingularMatern, normalize_amplitude
from spectralkernel.oracles import (
    bessel_k,
    exp_sdf_alpha_kernel,
    matern_kernel_closed_form,
    oscillatory_integral,
    reference_kernel,
    singular_matern_1f2,
    wynn_epsilon,
)

pytestmark = pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")


def test_bessel_half_integer():
    x = np.array([0.1, 1.0, 7.5])
    np.testing.assert_allclose(bessel_k(0.5, x), np.sqrt(np.pi / (2 * x)) * np.exp(-x), rtol=1e-14)


def test_bessel_recurrence():
    for nu in (0.51, 1.3, 3.7):
        for x in (0.3, 2.0, 15.0):
            lhs = bessel_k(nu + 1, x)
            # K_{-v} = K_v
            rhs = bessel_k(abs(nu - 1), x) + 2 * nu / x * bessel_k(nu, x)
            assert lhs == pytest.approx(rhs, rel=1e-12)


def test_bessel_integral_representation():
    nu, x = 0.51, 1.0
    ref = integrate.quad(lambda t: np.exp(-x * np.cosh(t)) * np.cosh(nu * t), 0, 30, epsabs=1e-16, epsrel=1e-13)[0]
    assert bessel_k(nu, x) == pytest.approx(ref, rel=1e-11)
    with pytest.raises(InvalidArgumentError):
        bessel_k(0.5, 0.0)


def test_matern_closed_form_half():
    r = np.array([0.0, 0.2, 1.0])
    np.testing.assert_allclose(
        matern_kernel_closed_form(r, 1.3, 2.0, 0.5), 1.3**2 * np.pi / 2.0 * np.exp(-2 * np.pi * 2.0 * r), rtol=1e-13
    )


def test_matern_origin_limit():
    phi, rho, nu = 0.8, 1.7, 1.3
    k0 = phi**2 * rho ** (-2 * nu) * np.sqrt(np.pi) * special.gamma(nu) / special.gamma(nu + 0.5)
    assert matern_kernel_closed_form(0.0, phi, rho, nu) == pytest.approx(k0, rel=1e-14)
    assert matern_kernel_closed_form(1e-9, phi, rho, nu) == pytest.approx(k0, rel=1e-6)


@pytest.mark.parametrize("nu", [0.51, 1.5, 2.5])
def test_matern_closed_form_vs_brute_force(nu):
    m = normalize_amplitude(Matern(phi=1.0, rho=1.0, nu=nu))
    for r in (0.05, 0.37, 1.3):
        ref = reference_kernel(m, r)
        assert matern_kernel_closed_form(r, m.params["phi"], 1.0, nu) == pytest.approx(ref, abs=1e-12)


def test_exp_kernel_cases():
    r = np.array([0.0, 0.1, 2.0])
    np.testing.assert_allclose(exp_sdf_alpha_kernel(r, 0.0), 2 / (1 + (2 * np.pi * r) ** 2), rtol=1e-15)
    assert exp_sdf_alpha_kernel(0.0, 0.6) == pytest.approx(2 * special.gamma(0.4), rel=1e-15)


def test_exp_kernel_vs_brute_force():
    for alpha, r in ((0.3, 10.0), (0.3, 0.4), (0.7, 3.0)):
        ref = reference_kernel(ExponentialTest(phi=1.0, alpha=alpha), r)
        assert exp_sdf_alpha_kernel(r, alpha) == pytest.approx(ref, abs=1e-11)


def test_singular_1f2_vs_brute_force():
    m = SingularMatern(phi=1.0, rho=2.0, nu=2.1, alpha=0.3)
    for r in (0.05, 0.3, 0.8):
        ref = reference_kernel(m, r)
        assert singular_matern_1f2(r, 1.0, 2.0, 2.1, 0.3, precision=1024) == pytest.approx(ref, rel=1e-10, abs=1e-13)


def test_singular_double_agrees_at_small_rho():
    m = normalize_amplitude(SingularMatern(phi=1.0, rho=2.0, nu=2.1, alpha=0.3))
    phi = m.params["phi"]
    for r in np.linspace(0.05, 1.0, 6):
        d = singular_matern_1f2(r, phi, 2.0, 2.1, 0.3)
        hp = singular_matern_1f2(r, phi, 2.0, 2.1, 0.3, precision=3072)
        assert abs(d - hp) <= 1e-3


def test_singular_double_cancellation_at_rho_10():
    m = normalize_amplitude(SingularMatern(phi=1.0, rho=10.0, nu=2.1, alpha=0.3))
    phi = m.params["phi"]
    assert abs(singular_matern_1f2(1.0, phi, 10.0, 2.1, 0.3)) > 1e10
    val, rep = singular_matern_1f2(1.0, phi, 10.0, 2.1, 0.3, precision=3072, full_output=True)
    assert abs(val) <= 1.0
    assert rep.max_partial > 1e10 and rep.terms > 64


def test_singular_errors():
    with pytest.raises(PoleError):
        singular_matern_1f2(0.5, 1.0, 1.0, 0.85, 0.3)
    with pytest.raises(InvalidArgumentError):
        singular_matern_1f2(0.5, 1.0, 1.0, 1.0, 0.0)
    with pytest.raises(PrecisionEscalation):
        singular_matern_1f2(1.0, 1.0, 10.0, 2.1, 0.3, precision=64)


def test_wynn_accelerates_alternating_series():
    partial = np.cumsum([(-1) ** k / (k + 1) for k in range(20)])
    val, err = wynn_epsilon(partial)
    assert val == pytest.approx(np.log(2), abs=1e-12)
    assert err < 1e-10


def test_oscillatory_integral_known():
    # int_0^inf exp(-w) cos(2 pi w r) dw = 1 / (1 + (2 pi r)^2)
    val, err = oscillatory_integral(lambda w: np.exp(-np.asarray(w)), 0.7)
    assert val == pytest.approx(1 / (1 + (2 * np.pi * 0.7) ** 2), abs=1e-14)
    assert err >= 0


def test_reference_derivatives():
    m = SingularMatern(phi=1.0, rho=0.5, nu=0.51, alpha=0.1)
    r = 0.3
    h = 1e-5
    for name in ("nu", "alpha"):
        v = m.params[name]
        fd = (reference_kernel(m.with_params(**{name: v + h}), r) - reference_kernel(m.with_params(**{name: v - h}), r)) / (2 * h)
        assert reference_kernel(m, r, derivative=name) == pytest.approx(fd, rel=1e-6)
