import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgpc import spectral as sp
from dgpc.errors import ConfigError
from dgpc.spectral import ETD2, AdamsPC4, Grid, Stepper, _phi_functions


def test_grid_validation():
    with pytest.raises(ConfigError):
        Grid(7)
    with pytest.raises(ConfigError):
        Grid(4)
    with pytest.raises(ConfigError):
        Grid(8, 3)
    g = Grid(16, 2)
    assert g.shape == (16, 16) and g.modal_shape == (16, 9)
    assert g.weight == pytest.approx(1 / 256)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 5), st.sampled_from([16, 32]))
def test_roundtrip_and_derivative_of_sine(k, M):
    g = Grid(M)
    u = np.sin(2 * np.pi * k * g.x)
    uh = sp.to_modal(u, g)
    assert np.allclose(sp.to_physical(uh, g), u, atol=1e-13)
    du = sp.to_physical(sp.derivative(uh, g), g)
    assert np.allclose(du, 2 * np.pi * k * np.cos(2 * np.pi * k * g.x), atol=1e-10)
    d2 = sp.to_physical(sp.derivative(uh, g, order=2), g)
    assert np.allclose(d2, -(2 * np.pi * k) ** 2 * u, atol=1e-8)


def test_nyquist_zeroed_in_derivative_kept_in_k2():
    g = Grid(8)
    u = np.cos(np.pi * 8 * g.x)  # pure Nyquist mode
    uh = sp.to_modal(u, g)
    assert np.allclose(sp.derivative(uh, g), 0)
    assert g.k2[-1] == pytest.approx((2 * np.pi * 4) ** 2)
    with pytest.raises(ValueError):
        sp.derivative(uh, g, order=3)


def test_2d_derivatives_and_poisson():
    g = Grid(16, 2)
    x, y = g.mesh()
    psi = np.sin(2 * np.pi * x) * np.cos(4 * np.pi * y)
    w = 20 * np.pi ** 2 * psi  # -Laplace(psi)
    ph = sp.poisson_solve(sp.to_modal(w, g), g)
    assert np.allclose(sp.to_physical(ph, g), psi, atol=1e-12)
    dy = sp.to_physical(sp.derivative(sp.to_modal(psi, g), g, axis=1), g)
    assert np.allclose(dy, -4 * np.pi * np.sin(2 * np.pi * x) * np.sin(4 * np.pi * y), atol=1e-10)
    lap = sp.to_physical(sp.laplacian(sp.to_modal(psi, g), g), g)
    assert np.allclose(lap, -w, atol=1e-9)
    with pytest.raises(ValueError):
        sp.poisson_solve(sp.to_modal(w + 1.0, g), g)


def test_dealias_mask_two_thirds():
    g = Grid(12)
    assert g.dealias_mask.sum() == 5  # k = 0..4
    u = np.cos(2 * np.pi * 3 * g.x)
    prod = sp.dealiased_product(u, u, g)  # cos^2 = (1 + cos 6 pi x)/2, k=6 removed
    assert np.allclose(prod, 0.5, atol=1e-13)


def test_integrate():
    g = Grid(16, 2)
    x, y = g.mesh()
    assert g.integrate(np.ones(g.shape)) == pytest.approx(1.0)
    assert g.integrate(np.sin(2 * np.pi * x)) == pytest.approx(0.0, abs=1e-15)


def test_phi_functions_continuous_at_switch():
    z = np.array([-1e-3 * (1 - 1e-9), -1e-3 * (1 + 1e-9), 0.0])
    p1, p2 = _phi_functions(z)
    assert abs(p1[0] - p1[1]) < 1e-12 and abs(p2[0] - p2[1]) < 1e-12
    assert p1[2] == 1.0 and p2[2] == 0.5
    p1, p2 = _phi_functions(np.array([-2.0]))
    assert p1[0] == pytest.approx((np.exp(-2) - 1) / -2)
    assert p2[0] == pytest.approx((np.exp(-2) - 1 + 2) / 4)


def _scalar_problem():
    # u' = -2 u + sin(u) + cos(t), stiff part -2
    rates = np.array([-2.0])

    def N(u, t):
        return np.sin(u) + np.cos(t)
    return rates, N


def _reference(T):
    from scipy.integrate import solve_ivp
    sol = solve_ivp(lambda t, u: -2 * u + np.sin(u) + np.cos(t), (0, T), [1.0], rtol=1e-12,
                    atol=1e-14)
    return sol.y[0, -1]


def _integrate(scheme, h, T=1.0):
    rates, N = _scalar_problem()
    st_ = Stepper(rates, h, scheme)
    u = np.array([1.0])
    for k in range(int(round(T / h))):
        u = st_.step(u, N, k * h)
    return u[0]


def test_etd2_second_order():
    ref = _reference(1.0)
    errs = [abs(_integrate("etd2", h) - ref) for h in (0.05, 0.025, 0.0125)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(orders - 2) < 0.2)


def test_adams_fourth_order_after_bootstrap():
    ref = _reference(1.0)
    errs = [abs(_integrate("adams4", h) - ref) for h in (0.02, 0.01, 0.005)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    # ETD2 bootstrap steps contribute O(h^3) locally, so the global order is at least 3
    assert np.all(orders > 2.8)
    assert errs[-1] < 1e-8


def test_etd2_exact_for_linear_problem():
    rates = np.array([-3.0, -0.5])
    e = ETD2(rates, 0.1)
    u = np.array([1.0, 2.0])
    for _ in range(10):
        u, _n = e.step(u, lambda v, t: 0 * v, 0.0)
    assert np.allclose(u, [np.exp(-3.0), 2 * np.exp(-0.5)], rtol=1e-14)


def test_etd2_constant_forcing_exact():
    # u' = -u + 1 has the exact solution 1 - e^{-t}; ETD reproduces it
    e = ETD2(np.array([-1.0]), 0.2)
    u = np.zeros(1)
    for k in range(5):
        u, _n = e.step(u, lambda v, t: np.ones(1), 0.2 * k)
    assert u[0] == pytest.approx(1 - np.exp(-1.0), rel=1e-13)


def test_adams_requires_history():
    a = AdamsPC4(np.array([-1.0]), 0.1)
    with pytest.raises(ValueError):
        a.step(np.zeros(1), lambda v, t: v, 0.0)
    with pytest.raises(ValueError):
        sp.adams_pc4_step([np.zeros(1)], np.zeros(1), lambda v, t: v, np.array([-1.0]), 0.1, 0)
    with pytest.raises(ConfigError):
        Stepper(np.array([-1.0]), 0.1, "rk4")


def test_transform_examples():
    g = Grid(16)
    ch = sp.to_modal(np.full(16, 2.0), g)
    assert ch[0] == pytest.approx(32.0) and np.allclose(ch[1:], 0)
    sh = sp.to_modal(np.sin(2 * np.pi * g.x), g)
    assert np.count_nonzero(np.abs(sh) > 1e-12) == 1 and abs(sh[1]) == pytest.approx(8.0)
    r = np.random.default_rng(0).standard_normal((3, 16, 16))
    g2 = Grid(16, 2)
    assert np.max(np.abs(sp.to_physical(sp.to_modal(r, g2), g2) - r)) < 1e-13
    c4 = sp.to_physical(sp.derivative(sp.to_modal(np.cos(4 * np.pi * g.x), g), g), g)
    assert np.allclose(c4, -4 * np.pi * np.sin(4 * np.pi * g.x), atol=1e-12)
    assert np.allclose(sp.derivative(sp.to_modal(np.ones(16), g), g, order=2), 0)


def test_poisson_examples():
    g = Grid(32, 2)
    x, y = g.mesh()
    w = np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)
    psi = sp.to_physical(sp.poisson_solve(sp.to_modal(w, g), g), g)
    assert np.allclose(psi, w / (8 * np.pi ** 2), atol=1e-14)
    assert np.all(sp.poisson_solve(np.zeros(g.modal_shape, complex), g) == 0)
    r = np.random.default_rng(1).standard_normal(g.shape)
    r -= r.mean()
    rh = sp.to_modal(r, g)
    back = sp.laplacian(sp.poisson_solve(rh, g), g) + rh
    assert np.max(np.abs(sp.to_physical(back, g))) < 1e-11


def test_dealiased_product_examples():
    g = Grid(8)
    assert np.allclose(sp.dealiased_product(np.ones(8), np.ones(8), g), 1.0)
    s = np.sin(2 * np.pi * g.x)
    assert np.allclose(sp.dealiased_product(s, s, g), (1 - np.cos(4 * np.pi * g.x)) / 2,
                       atol=1e-14)
    g = Grid(32)
    r = np.random.default_rng(2).standard_normal(32)
    out = sp.to_modal(sp.dealiased_product(r, r, g), g)
    assert np.max(np.abs(out[~g.dealias_mask])) < 1e-13


def test_pure_decay_and_heat_equation():
    g = Grid(32)
    nu, dt = 0.01, 0.05
    e = ETD2(-nu * g.k2, dt)
    u0 = np.sin(2 * np.pi * g.x) + 0.3 * np.cos(6 * np.pi * g.x)
    uh = sp.to_modal(u0, g)
    for _ in range(20):
        uh, _n = e.step(uh, lambda v, t: 0 * v, 0.0)
    exact = (np.exp(-nu * (2 * np.pi) ** 2) * np.sin(2 * np.pi * g.x)
             + 0.3 * np.exp(-nu * (6 * np.pi) ** 2) * np.cos(6 * np.pi * g.x))
    assert np.max(np.abs(sp.to_physical(uh, g) - exact)) < 1e-10


def test_etd2_linear_ode_slope():
    # u' = lam u split as stiff part lam/2 plus explicit part lam/2
    lam = -1.3

    def err(h):
        e = ETD2(np.array([lam / 2]), h)
        u = np.ones(1)
        for _ in range(int(round(1 / h))):
            u, _n = e.step(u, lambda v, t: lam / 2 * v, 0.0)
        return abs(u[0] - np.exp(lam))
    assert np.log2(err(0.1) / err(0.05)) >= 1.9


def test_adams_u_prime_u_slope_with_exact_history():
    def err(h):
        a = AdamsPC4(np.zeros(1), h)
        for k in (3, 2, 1, 0):
            a.push(np.array([np.exp(-k * h)]))  # N = u at t_0, t_-1, t_-2, t_-3
        u = np.ones(1)
        for k in range(int(round(1 / h))):
            u = a.step(u, lambda v, t: v, k * h)
        return abs(u[0] - np.e)
    assert np.log2(err(0.025) / err(0.0125)) >= 3.8


def test_adams_zero_rhs_and_cross_method():
    st_ = Stepper(np.zeros(2), 0.1, "adams4")
    u = np.array([1.0, 2.0])
    for k in range(8):
        u = st_.step(u, lambda v, t: 0 * v, 0.1 * k)
    assert u.tolist() == [1.0, 2.0]
    a = _integrate("adams4", 0.01)
    b = _integrate("etd2", 0.01)
    assert abs(a - b) < 1e-4
