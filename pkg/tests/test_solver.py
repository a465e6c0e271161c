import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dgpc.basis import (
    GAUSS, analytic_basis, build_gram, closure_moments, orthonormalize, triple_rounding,
)
from dgpc.config import from_dict
from dgpc.errors import BlowUpError, ConfigError
from dgpc.models import BurgersModel
from dgpc.multiindex import SparseIndex, build_sparse_set
from dgpc.solver import (
    AdaptiveConfig, SolverConfig, adaptive_next_step, evolve_interval, first_interval_set,
    initial_state, moments_from_pce, relative_l2_error, restart, rho_ratio, run,
    shadow_orthonormality,
)
from dgpc.sampling import joint_points, pce_map
from dgpc.spectral import Grid


def small_model(M=32, nu=0.02):
    g = Grid(M)
    return BurgersModel(g, nu, 0.3 * np.cos(2 * np.pi * g.x), 0.5 * np.sin(2 * np.pi * g.x))


def small_cfg(**kw):
    base = dict(K=2, N=2, D=2, S=4000, dt=0.01, T=0.2, Dt=0.1, seed=3)
    base.update(kw)
    return SolverConfig(**base)


# ---------------------------------------------------------------- diagnostics

def test_rho_ratio():
    iset = build_sparse_set(2, 0, 2)
    c = np.zeros((len(iset), 3))
    assert rho_ratio(c, iset) == 0.0
    c[iset.unit(0)] = 1.0
    assert rho_ratio(c, iset) == 0.0
    c[iset.position((2, 0))] = 1.0
    assert rho_ratio(c, iset) == pytest.approx(0.5)


def test_relative_l2_error_zero_reference():
    assert relative_l2_error([3.0, 4.0], np.zeros(2)) == (5.0, False)
    val, norm = relative_l2_error([1.0, 1.0], np.array([1.0, 0.0]))
    assert norm and val == pytest.approx(1.0)


# ---------------------------------------------------------------- adaptive scheduling

CFG = AdaptiveConfig(eps=0.01, dt_max=1.0, dt0=0.1, p=2)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.15), st.floats(0.0, 0.1))
def test_advance_root_linear_growth(a, b):
    # rho = a t + b t^2 stays below 3 eps on [0, 0.1]; root of the fit at 2 eps
    t = np.linspace(0.01, 0.1, 10)
    rho = a * t + b * t ** 2
    d = adaptive_next_step(t, rho, 0.1, CFG)
    root = 2 * 0.02 / (a + np.sqrt(a * a + 4 * b * 0.02))  # stable form of the quadratic root
    assert d.action == "advance"
    assert d.dt == pytest.approx(min(root, CFG.dt_max), abs=1e-8)


def test_advance_when_fit_already_past_level():
    t = np.linspace(0.01, 0.1, 10)
    rho = 0.25 * t  # reaches 2 eps at 0.08 < 0.1, never 3 eps
    d = adaptive_next_step(t, rho, 0.1, CFG)
    assert d.action == "advance" and d.dt == pytest.approx(0.08, abs=1e-8)


def test_rollback_uses_first_crossing():
    t = np.linspace(0.01, 0.1, 10)
    rho = 50.0 * t ** 3  # cubic data: the not-a-knot spline is exact
    d = adaptive_next_step(t, rho, 0.1, CFG)
    assert d.action == "rollback"
    assert d.dt == pytest.approx((0.02 / 50.0) ** (1 / 3), abs=1e-8)


def test_rollback_fallback_half_step():
    t = np.linspace(0.01, 0.1, 10)
    rho = np.full(10, 0.05)  # above 3 eps from the start, no crossing
    d = adaptive_next_step(t, rho, 0.1, CFG)
    assert d.action == "rollback" and d.dt == pytest.approx(0.05)


def test_flat_rho_gives_max_step():
    t = np.linspace(0.01, 0.1, 10)
    assert adaptive_next_step(t, np.zeros(10), 0.1, CFG).dt == CFG.dt_max
    assert adaptive_next_step(t, np.full(10, 1e-4), 0.1, CFG).dt == CFG.dt_max


def test_adaptive_config_validation():
    with pytest.raises(ConfigError):
        AdaptiveConfig(eps=0.5, dt_max=1, dt0=0.1)
    with pytest.raises(ConfigError):
        AdaptiveConfig(eps=0.01, dt_max=0.1, dt0=0.2)
    with pytest.raises(ConfigError):
        SolverConfig(K=0, N=2, D=1, S=10, dt=0.1, T=1, Dt=0.1)
    with pytest.raises(ConfigError):
        SolverConfig(K=1, N=2, D=1, S=10, dt=0.1, T=1, Dt=None)
    with pytest.raises(ConfigError):
        SolverConfig(K=1, N=2, D=1, S=10, dt=0.1, T=1, Dt=0.1, sparse=SparseIndex.uniform(3, 2))


# ---------------------------------------------------------------- interval pieces

def test_first_interval_set_restricts_caps():
    cfg = small_cfg(sparse=SparseIndex.from_lists([2, 1, 1, 1]))
    iset = first_interval_set(cfg)
    assert iset.K == 2 and iset.D == 0
    assert len(iset) == 5  # 1, xi1, xi2, xi1^2, xi1 xi2


def test_initial_state_is_deterministic():
    model = small_model()
    st_ = initial_state(model, small_cfg())
    assert np.array_equal(st_.coeffs[0], model.initial_fields())
    assert np.all(st_.coeffs[1:] == 0)


def test_interval_mean_preserved_spatially():
    model = small_model()
    cfg = small_cfg()
    st_ = initial_state(model, cfg)
    new, offsets, rho = evolve_interval(model, st_, 0.1, 0.01)
    assert len(offsets) == 10 and offsets[-1] == pytest.approx(0.1)
    assert np.allclose(new.coeffs.mean(axis=-1), st_.coeffs.mean(axis=-1), atol=1e-12)
    assert np.all(rho >= 0) and np.all(rho < 1)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blowup_detected():
    g = Grid(16)
    model = BurgersModel(g, -5.0, np.zeros(16), np.sin(2 * np.pi * g.x))
    cfg = small_cfg(dt=0.05, T=1.0, Dt=1.0)
    with pytest.raises(BlowUpError):
        evolve_interval(model, initial_state(model, cfg), 1.0, 0.05)


def test_restart_invariants():
    model = small_model()
    # caps keep eta_2^2 out: with linear eta_1, eta_2 it would duplicate eta_3
    cfg = small_cfg(D=3, S=20_000, sparse=SparseIndex.from_lists([2, 2, 2, 1, 1], [2, 2, 2, 1, 0]))
    st_ = initial_state(model, cfg)
    mid, _, _ = evolve_interval(model, st_, 0.1, 0.01)
    new, info = restart(model, mid, cfg)
    assert np.array_equal(new.coeffs[0], mid.coeffs[0])
    assert info["deficit"] == pytest.approx(info["trailing"], rel=1e-8, abs=1e-14)
    assert new.basis.index_set.K == 2 and new.basis.index_set.D == 3
    # the new basis is orthonormal on its own ensemble
    from dgpc.basis import evaluate_basis
    from dgpc.sampling import draw_analytic, joint_points, substream
    xi = draw_analytic(new.ensemble.S, new.basis.kinds, substream(9, 9))
    T = evaluate_basis(new.basis.a, new.basis.index_set, joint_points(xi, new.ensemble))
    G = T.T @ T / len(T)
    assert np.max(np.abs(G - np.eye(len(G)))) < 0.1
    assert np.allclose(new.ensemble.values.mean(axis=0), 0, atol=1e-12)


def test_moments_from_pce_gaussian_field():
    iset = build_sparse_set(1, 0, 2)
    basis = analytic_basis(iset, (GAUSS,), 1)
    c = np.zeros((len(iset), 2))
    c[0] = [1.0, -1.0]
    c[iset.unit(0)] = [2.0, 0.5]
    m = moments_from_pce(c, basis, None, orders=4, S=200_000, seed=1)
    assert np.allclose(m["variance"], [4.0, 0.25])
    assert np.allclose(m["third"], 0, atol=0.1)
    assert np.allclose(m["fourth"], [48.0, 3 * 0.25 ** 2], rtol=0.05)
    assert np.allclose(m["raw2"], m["variance"] + m["mean"] ** 2)
    two = moments_from_pce(c, basis, orders=2)
    assert "third" not in two


def test_run_counts_restarts_and_is_reproducible():
    model = small_model()
    cfg = small_cfg(moment_times=(0.2,))
    a = run(model, cfg)
    b = run(model, cfg)
    assert a.restarts == 2 and a.times == pytest.approx([0.1, 0.2])
    assert np.array_equal(a.state.coeffs, b.state.coeffs)
    assert set(a.moments) == {0.2}
    assert np.array_equal(a.moments[0.2]["fourth"], b.moments[0.2]["fourth"])


def test_run_resume_matches_uninterrupted():
    model = small_model()
    full = run(model, small_cfg(T=0.3))
    part = run(model, small_cfg(T=0.1))
    rest = run(model, small_cfg(T=0.3), state=part.state)
    assert np.array_equal(full.state.coeffs, rest.state.coeffs)


def test_adaptive_run_advances():
    model = small_model()
    cfg = small_cfg(T=0.3, Dt=None, adaptive=AdaptiveConfig(eps=0.02, dt_max=0.3, dt0=0.05))
    res = run(model, cfg)
    assert res.times[-1] == pytest.approx(0.3)
    assert sum(res.intervals) == pytest.approx(0.3)


def test_shadow_orthonormality_small():
    model = small_model()
    cfg = small_cfg(record_history=True, S=20_000, D=2)
    res = run(model, cfg)
    stats = shadow_orthonormality(res.history, 20_000, seed=11, first_kinds=(GAUSS, GAUSS))
    assert len(stats) == 2
    assert all(off < 0.1 for off, _ in stats)


# ---------------------------------------------------------------- more worked examples

def test_rho_examples():
    iset = build_sparse_set(1, 0, 2)
    c = np.zeros((3, 4))
    c[2] = 1.0
    assert rho_ratio(c, iset) == 1.0
    c[1] = 1.0
    assert rho_ratio(c, iset) == 0.5


def test_linear_rho_reaching_level_at_end():
    t = np.linspace(0.01, 0.1, 10)
    d = adaptive_next_step(t, 2 * CFG.eps * t / 0.1, 0.1, CFG)
    assert d.action == "advance" and d.dt == pytest.approx(0.1, abs=1e-12)


def test_relative_error_examples():
    b = np.array([3.0, 4.0])
    assert relative_l2_error(b, b)[0] == 0.0
    assert relative_l2_error(2 * b, b)[0] == pytest.approx(1.0)
    e = np.array([0.6, -0.8])
    assert relative_l2_error(b + 1e-3 * e, b)[0] == pytest.approx(1e-3 / 5)


def test_restart_of_deterministic_state():
    g = Grid(16)
    model = BurgersModel(g, 0.02, 0.0, np.sin(2 * np.pi * g.x))
    cfg = small_cfg()
    st_ = initial_state(model, cfg)
    new, info = restart(model, st_, cfg)
    assert info["kl"].rank == 0 and new.ensemble is None
    assert np.array_equal(new.coeffs[0], st_.coeffs[0]) and np.all(new.coeffs[1:] == 0)


def test_zero_rhs_leaves_state_unchanged():
    g = Grid(16)
    model = BurgersModel(g, 0.0, 0.0, np.zeros(16))
    st_ = initial_state(model, small_cfg())
    new, _, rho = evolve_interval(model, st_, 0.1, 0.01)
    assert np.all(new.coeffs == 0) and np.all(rho == 0)


def test_gaussian_restart_preserves_moments_and_is_idempotent():
    g = Grid(32)
    model = BurgersModel(g, 0.05, 0.05 * np.cos(2 * np.pi * g.x), np.zeros(32))
    cfg = small_cfg(K=1, N=2, D=3, S=50_000)
    mid, _, _ = evolve_interval(model, initial_state(model, cfg), 0.1, 0.01)
    new, info = restart(model, mid, cfg)
    total = g.weight * np.sum(mid.variance)
    tol = info["trailing"] / total + 5 / np.sqrt(cfg.S)
    assert np.array_equal(new.mean, mid.mean)
    assert np.sum(np.abs(new.variance - mid.variance)) / np.sum(mid.variance) <= tol
    again, _ = restart(model, new, cfg)
    assert np.array_equal(again.mean, new.mean)
    assert np.sum(np.abs(again.variance - new.variance)) / np.sum(new.variance) <= 5 / np.sqrt(cfg.S)


def test_moment_routes_agree():
    model = small_model()
    cfg = small_cfg(S=50_000, moment_times=(0.2,))
    res = run(model, cfg)
    m = res.moments[0.2]
    rel = np.abs(m["variance_sampled"] - m["variance"]) / m["variance"].max()
    assert np.max(rel) < 5 / np.sqrt(cfg.S) * 3
    iset = build_sparse_set(1, 0, 2)
    det = np.zeros((len(iset), 4))
    det[0] = 1.0
    mm = moments_from_pce(det, analytic_basis(iset, (GAUSS,), 1), orders=4, S=100)
    assert np.all(mm["variance"] == 0) and np.allclose(mm["third"], 0) and np.allclose(mm["fourth"], 0)


def test_noise_free_run_is_deterministic_solve():
    g = Grid(32)
    u0 = 0.5 * np.sin(2 * np.pi * g.x)
    model = BurgersModel(g, 0.02, 0.0, u0)
    res = run(model, small_cfg(T=0.3, dt=0.005))
    from test_models import _standalone_burgers
    ref = _standalone_burgers(u0, 0.02, g, 0.005, 60)
    assert np.max(np.abs(res.state.mean[0] - ref)) < 1e-10
    assert np.all(res.state.variance == 0)
    assert res.restarts == 3


def test_first_interval_mean_against_monte_carlo():
    from dgpc.mc import MCConfig, mc_run
    cfg = from_dict({"preset": "example1:iii", "T": 0.1, "S": 10_000})
    model = cfg.build_model()
    res = run(model, cfg.solver_config())
    mc = mc_run(model, MCConfig(10_000, cfg.dt, 0.1, seed=1))
    assert relative_l2_error(res.mean[-1], mc.moments[0.1]["mean"])[0] <= 3e-2


def test_short_first_interval_basis_drops_near_dependent_terms():
    # after a short Gaussian interval the KL modes are quadratics of two
    # variables, so several quadratic eta monomials are nearly dependent
    cfg = from_dict({"preset": "example2", "M": 32, "T": 0.1, "S": 20_000})
    state = run(cfg.build_model(), cfg.solver_config()).state
    b = state.basis
    s = b.index_set
    table = closure_moments(s, [GAUSS, GAUSS], state.ensemble.values)
    plain, _ = orthonormalize(build_gram(table, s))
    assert triple_rounding(plain, table, s) > 1.0
    assert len(b.dropped) > 0
    assert all(s.indices[k].sum() == 2 for k in b.dropped)
    assert triple_rounding(b.a, table, s) <= 1e-9
    assert np.max(np.abs(b.a)) < 1e3


def test_example2_runs_through_short_restart_intervals():
    cfg = from_dict({"preset": "example2", "M": 32, "T": 0.3, "Dt": 0.05, "S": 20_000})
    res = run(cfg.build_model(), cfg.solver_config())
    assert res.restarts == 6
    assert np.all(np.isfinite(res.state.coeffs))


def test_history_replay_reproduces_the_ensemble():
    # pushing the run's own draws through the recorded maps gives its ensemble back
    from dgpc.sampling import STREAM_PROPAGATE, SampleEnsemble, draw_analytic, substream
    model = small_model()
    cfg = small_cfg(record_history=True, S=5_000, D=2)
    res = run(model, cfg)
    ens = None
    for j, h in enumerate(res.history):
        xi = draw_analytic(cfg.S, h.old_basis.kinds, substream(cfg.seed, j + 1, STREAM_PROPAGATE))
        raw = pce_map(h.eta_pce, h.old_basis, joint_points(xi, ens))
        ens = SampleEnsemble(h.whitening(raw), j + 1, cfg.seed)
        G = ens.values.T @ ens.values / cfg.S
        assert np.max(np.abs(G - np.eye(len(G)))) < 1e-12
    assert np.array_equal(ens.values, res.state.ensemble.values)
