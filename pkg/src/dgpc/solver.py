"""Restarted polynomial chaos: evolve, compress, re-orthogonalize, repeat.

Each interval [t_j, t_{j+1}] carries an orthonormal basis in the forcing
variables xi of that interval and the KL modes eta of the solution at t_j.
At the end of the interval the solution is compressed by KL, the new modes
are sampled through the PCE map, a new basis is built from their moments,
and the expansion restarts from mean + first-degree terms.
"""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import kl as klmod
from . import spectral as sp
from .basis import GAUSS, UNIFORM, analytic_basis, build_basis, closure_moments, evaluate_basis
from .errors import BlowUpError, ConfigError
from .forcing import cosine_basis
from .multiindex import SparseIndex, build_sparse_set
from .sampling import (
    STREAM_MOMENTS, STREAM_PROPAGATE, STREAM_SHADOW, STREAM_SKETCH, SampleEnsemble,
    Whitening, draw_analytic, joint_points, pce_map, solution_samples, substream, whiten,
)

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- configuration

@dataclass
class AdaptiveConfig:
    """Restart scheduling from the growth of the nonlinear part of the variance."""

    eps: float
    dt_max: float
    dt0: float
    p: int = 2
    retries: int = 3

    def __post_init__(self):
        bad = []
        if not 0 < self.eps < 1 / 3:
            bad.append("eps")
        if not 0 < self.dt0 <= self.dt_max:
            bad.append("dt0")
        if self.p < 1:
            bad.append("p")
        if bad:
            raise ConfigError("invalid adaptive settings", bad)


@dataclass
class SolverConfig:
    K: int
    N: int
    D: int
    S: int
    dt: float
    T: float
    Dt: Optional[float] = None
    adaptive: Optional[AdaptiveConfig] = None
    sparse: Optional[SparseIndex] = None
    seed: int = 0
    kl_method: str = "dense"
    oversample: int = 10
    scheme: str = "etd2"
    moment_times: tuple = ()
    moment_samples: Optional[int] = None
    record_history: bool = False

    def __post_init__(self):
        bad = []
        for name in ("K", "N", "S"):
            if getattr(self, name) < 1:
                bad.append(name)
        if self.D < 0:
            bad.append("D")
        if self.dt <= 0:
            bad.append("dt")
        if self.T <= 0:
            bad.append("T")
        if self.adaptive is None and (self.Dt is None or self.Dt <= 0 or self.Dt > self.T + 1e-12):
            bad.append("Dt")
        if self.sparse is not None and len(self.sparse) != self.K + self.D:
            bad.append("caps")
        if self.kl_method not in ("dense", "randomized"):
            bad.append("kl_method")
        if bad:
            raise ConfigError(f"invalid solver settings: {', '.join(bad)}", bad)

    def caps(self):
        return self.sparse if self.sparse is not None else SparseIndex.uniform(self.K + self.D, self.N)


# ---------------------------------------------------------------- state

@dataclass
class RestartState:
    """Everything needed to continue a run from time ``t``.

    ``coeffs`` has shape (n, p, *grid) (physical values). ``z_coeffs`` and
    ``nu_coeffs`` are present only with a random viscosity.
    """

    t: float
    j: int
    basis: object
    coeffs: np.ndarray
    ensemble: Optional[SampleEnsemble] = None
    z_coeffs: Optional[np.ndarray] = None
    nu_coeffs: Optional[np.ndarray] = None
    kl: Optional[klmod.KLResult] = None
    dt_next: Optional[float] = None

    @property
    def mean(self):
        return self.coeffs[0]

    @property
    def variance(self):
        return np.sum(self.coeffs[1:] ** 2, axis=0)


@dataclass
class HistoryEntry:
    """Maps used at one restart, enough to push a second ensemble through."""

    t: float
    old_basis: object
    eta_pce: np.ndarray
    whitening: Whitening
    new_basis: object


@dataclass
class RunResult:
    times: list = field(default_factory=list)
    mean: list = field(default_factory=list)
    variance: list = field(default_factory=list)
    moments: dict = field(default_factory=dict)      # t -> dict of moment fields
    restarts: int = 0
    rollbacks: int = 0
    intervals: list = field(default_factory=list)   # interval lengths
    eigenvalues: list = field(default_factory=list)
    deficits: list = field(default_factory=list)     # (L1 variance loss, trailing eig sum)
    jitters: list = field(default_factory=list)
    history: list = field(default_factory=list)
    rho: list = field(default_factory=list)
    wall_time: float = 0.0
    state: Optional[RestartState] = None


# ---------------------------------------------------------------- diagnostics

def rho_ratio(coeffs, index_set):
    """||sum_{|a|>1} u_a^2||_L1 / ||sum_{|a|>0} u_a^2||_L1 (0 for zero variance)."""
    n = coeffs.shape[0]
    energy = np.sum(coeffs.reshape(n, -1) ** 2, axis=1)
    deg = index_set.degrees
    total = energy[deg > 0].sum()
    if total == 0:
        return 0.0
    return float(energy[deg > 1].sum() / total)


def relative_l2_error(a, b):
    """(||a - b|| / ||b||, normalized) with the absolute norm when ||b|| = 0."""
    num = np.sqrt(np.sum((np.asarray(a) - b) ** 2))
    den = np.sqrt(np.sum(np.asarray(b) ** 2))
    if den == 0:
        return float(num), False
    return float(num / den), True


def rel_l2(a, b):
    return relative_l2_error(a, b)[0]


# ---------------------------------------------------------------- adaptive steps

@dataclass
class Decision:
    action: str  # "advance" or "rollback"
    dt: float


def _first_crossing(times, rho, level):
    """Smallest time where the cubic interpolant of rho equals ``level``."""
    order = np.argsort(times)
    t, r = np.asarray(times)[order], np.asarray(rho)[order]
    if len(t) < 2:
        return None
    if len(t) < 4:
        roots = np.interp(level, r, t) if np.all(np.diff(r) > 0) else None
        return None if roots is None else float(roots)
    spline = CubicSpline(t, r)
    roots = spline.solve(level, extrapolate=False)
    roots = roots[np.isfinite(roots)]
    return float(roots.min()) if len(roots) else None


def adaptive_next_step(times, rho, dt, cfg):
    """Decide the next interval from the recorded rho trajectory.

    ``times`` are offsets from the interval start. If rho exceeds 3 eps the
    interval is rejected and retried up to its interpolated 2 eps crossing;
    otherwise a degree-p least squares fit predicts when rho reaches 2 eps.
    """
    times = np.asarray(times, dtype=float)
    rho = np.asarray(rho, dtype=float)
    level = 2 * cfg.eps
    if rho.max(initial=0.0) > 3 * cfg.eps:
        t_star = _first_crossing(times, rho, level)
        if t_star is None or not 0 < t_star < dt:
            t_star = 0.5 * dt
        return Decision("rollback", min(t_star, cfg.dt_max))
    if np.all(rho == 0):
        return Decision("advance", cfg.dt_max)
    deg = min(cfg.p, len(times) - 1)
    coef = np.polynomial.polynomial.polyfit(times, rho, deg)
    shifted = coef.copy()
    shifted[0] -= level
    roots = np.polynomial.polynomial.polyroots(shifted)
    real = roots[np.abs(roots.imag) <= 1e-10 * max(1.0, dt)].real
    fit_end = np.polynomial.polynomial.polyval(times[-1], coef)
    if fit_end < level:
        cand = real[real > times[-1] * (1 - 1e-12)]
    else:
        cand = real[(real > 0) & (real <= times[-1] * (1 + 1e-12))]
    if len(cand) == 0:
        return Decision("advance", cfg.dt_max)
    return Decision("advance", float(min(cand.min(), cfg.dt_max)))


# ---------------------------------------------------------------- pieces

def _analytic_kinds(basis):
    return tuple(basis.kinds)


def first_interval_set(cfg, n_uniform=0):
    """Index set in the forcing variables (and uniform parameters) only."""
    caps = cfg.caps().restrict(range(cfg.K))
    if n_uniform:
        caps = caps.extend(SparseIndex.uniform(n_uniform, cfg.N))
    return build_sparse_set(cfg.K + n_uniform, 0, cfg.N, caps)


def initial_state(model, cfg):
    """Deterministic initial condition in the analytic first-interval basis."""
    visc = getattr(model, "viscosity", None)
    n_u = visc.D_z if visc is not None and visc.random else 0
    iset = first_interval_set(cfg, n_u)
    kinds = (GAUSS,) * cfg.K + (UNIFORM,) * n_u
    basis = analytic_basis(iset, kinds, cfg.K)
    fields = model.initial_fields()
    coeffs = np.zeros((len(iset),) + fields.shape)
    coeffs[0] = fields
    z = nu = None
    if n_u:
        z = visc.z_pce_first(iset, range(cfg.K, cfg.K + n_u))
        nu = visc.nu_pce(z, basis)
    return RestartState(0.0, 0, basis, coeffs, None, z, nu)


def _steps(Dt, dt):
    n = max(1, int(round(Dt / dt)))
    if abs(n * dt - Dt) > 1e-9 * max(1.0, Dt):
        log.warning("interval %.6g is not a multiple of dt=%.6g; using %d steps", Dt, dt, n)
    return n


def evolve_interval(model, state, Dt, dt, scheme="etd2", callback=None, Kc=None):
    """Advance all coefficients over [t, t + Dt]; returns (state, offsets, rho)."""
    basis = state.basis
    n_w = model.n_brownian
    Kc = basis.n_forcing // n_w if Kc is None else Kc
    nsteps = _steps(Dt, dt)
    h = Dt / nsteps
    fb = cosine_basis(state.t, Dt, Kc, n_w)
    grid = model.grid
    rates = model.stiff_rates(state.nu_coeffs)
    rates = np.broadcast_to(rates, (model.ncomp,) + grid.modal_shape)
    stepper = sp.Stepper(rates, h, scheme)
    rhs = model.nonlinear(basis, fb, state.nu_coeffs)
    uh = sp.to_modal(state.coeffs, grid)
    offsets, rho = [], []
    phys = state.coeffs
    for k in range(nsteps):
        t = state.t + k * h
        uh = stepper.step(uh, rhs, t)
        phys = sp.to_physical(uh, grid)
        if not np.all(np.isfinite(phys)):
            raise BlowUpError(f"non-finite coefficients at t={t + h:.6g}", t + h)
        offsets.append((k + 1) * h)
        rho.append(rho_ratio(phys, basis.index_set))
        if callback is not None:
            callback(t + h, uh, phys, state)
    new = replace(state, t=state.t + Dt, coeffs=phys)
    return new, np.array(offsets), np.array(rho)


def _kl_blocks(model, state):
    n = len(state.basis)
    blocks = [state.coeffs.reshape(n, -1)]
    visc = getattr(model, "viscosity", None)
    scale = 1.0
    if state.z_coeffs is not None:
        scale = visc.scale
        blocks.append(scale * state.z_coeffs.reshape(n, -1))
    return blocks, scale


def compute_kl(model, state, cfg):
    blocks, _ = _kl_blocks(model, state)
    U = klmod.stack_fields(*blocks)
    w = model.grid.weight
    D = min(cfg.D, U.shape[1])
    if cfg.kl_method == "randomized" and D + cfg.oversample <= U.shape[1]:
        rng = substream(cfg.seed, state.j + 1, STREAM_SKETCH)
        return klmod.randomized_kl(U, D, w, cfg.oversample, rng=rng)
    return klmod.dense_kl(U, D, w)


def restart(model, state, cfg):
    """KL -> sample propagation -> moments -> basis -> mean + linear expansion.

    Returns (new_state, info) where ``info`` holds diagnostics and a
    :class:`HistoryEntry`.
    """
    grid = model.grid
    res = compute_kl(model, state, cfg)
    D = res.rank
    K = cfg.K
    j = state.j + 1
    field_shape = state.coeffs.shape[1:]
    field_size = int(np.prod(field_shape))
    total_var = grid.weight * np.sum(state.coeffs[1:] ** 2)

    if D == 0:
        iset = first_interval_set(cfg)
        basis = analytic_basis(iset, (GAUSS,) * K, K)
        coeffs = np.zeros((len(iset),) + field_shape)
        coeffs[0] = state.coeffs[0]
        new = RestartState(state.t, j, basis, coeffs, None, None, None, res)
        return new, {"kl": res, "deficit": total_var, "trailing": total_var, "jitter": 0.0,
                     "history": None}

    # propagate the joint samples through the map eta = sum eta_alpha T_alpha
    kinds = _analytic_kinds(state.basis)
    rng = substream(cfg.seed, j, STREAM_PROPAGATE)
    xi = draw_analytic(cfg.S, kinds, rng)
    raw = pce_map(res.eta_pce, state.basis, joint_points(xi, state.ensemble))
    white, wmap = whiten(raw)
    ensemble = SampleEnsemble(white, j, cfg.seed)

    caps = cfg.caps().restrict(range(K + D))
    iset = build_sparse_set(K, D, cfg.N, caps)
    new_kinds = (GAUSS,) * K
    table = closure_moments(iset, new_kinds, white)
    basis = build_basis(iset, table, K)

    n = len(iset)
    coeffs = np.zeros((n,) + field_shape)
    coeffs[0] = state.coeffs[0]
    amp = np.sqrt(res.eigenvalues)[:, None] * res.modes          # (D, L)
    for l in range(D):
        coeffs[iset.unit(K + l)] = amp[l, :field_size].reshape(field_shape)
    z = nu = None
    if state.z_coeffs is not None:
        visc = model.viscosity
        zshape = state.z_coeffs.shape[1:]
        z = np.zeros((n,) + zshape)
        z[0] = state.z_coeffs[0]
        for l in range(D):
            z[iset.unit(K + l)] = (amp[l, field_size:] / visc.scale).reshape(zshape)
        nu = visc.nu_pce(z, basis)

    kept_var = grid.weight * np.sum(coeffs[1:] ** 2)
    trailing = total_var - float(np.sum(res.eigenvalues)) if state.z_coeffs is None else None
    new = RestartState(state.t, j, basis, coeffs, ensemble, z, nu, res)
    hist = HistoryEntry(state.t, state.basis, res.eta_pce, wmap, basis)
    return new, {"kl": res, "deficit": total_var - kept_var, "trailing": trailing,
                 "jitter": basis.jitter, "history": hist}


# ---------------------------------------------------------------- moments

def moments_from_pce(coeffs, basis, ensemble=None, orders=2, S=None, seed=0, tag=0, chunk=20_000):
    """Mean, variance and (orders > 2) third/fourth central moments on the grid.

    Mean and variance come from the coefficients; higher moments from
    sampling the expansion at fresh forcing draws paired with the ensemble.
    Raw moments E[u^k] are included under keys ``raw1``..``raw4``.
    """
    mean = coeffs[0]
    var = np.sum(coeffs[1:] ** 2, axis=0)
    out = {"mean": mean, "variance": var, "raw1": mean, "raw2": var + mean ** 2}
    if orders <= 2:
        return out
    has_eta = basis.index_set.nvar > len(basis.kinds)
    if has_eta and ensemble is None:
        raise ValueError("higher moments need the sample ensemble")
    S = S if S is not None else (ensemble.S if ensemble is not None else 100_000)
    if ensemble is not None and S < ensemble.S:
        ensemble = SampleEnsemble(ensemble.values[:S], ensemble.generation, ensemble.rng_seed)
    elif ensemble is not None:
        S = ensemble.S
    rng = substream(seed, tag, STREAM_MOMENTS)
    xi = draw_analytic(S, basis.kinds, rng)
    pts = joint_points(xi, ensemble)
    n = coeffs.shape[0]
    flat = coeffs.reshape(n, -1)
    sums = np.zeros((4, flat.shape[1]))
    for start in range(0, S, chunk):
        T = evaluate_basis(basis.a, basis.index_set, pts[start:start + chunk])
        d = T[:, 1:] @ flat[1:]       # centered at the exact mean
        d2 = d * d
        sums[0] += d.sum(axis=0)
        sums[1] += d2.sum(axis=0)
        sums[2] += (d2 * d).sum(axis=0)
        sums[3] += (d2 * d2).sum(axis=0)
    e1, e2, e3, e4 = (s.reshape(mean.shape) / S for s in sums)
    # central moments of the sampled field around its sample mean
    c2 = e2 - e1 ** 2
    c3 = e3 - 3 * e1 * e2 + 2 * e1 ** 3
    c4 = e4 - 4 * e1 * e3 + 6 * e1 ** 2 * e2 - 3 * e1 ** 4
    m = mean
    out.update({
        "third": c3, "fourth": c4, "variance_sampled": c2,
        "raw3": m ** 3 + 3 * m * e2 + e3,
        "raw4": m ** 4 + 6 * m ** 2 * e2 + 4 * m * e3 + e4,
    })
    return out


# ---------------------------------------------------------------- run loop

def _snap(Dt, dt):
    return max(1, int(round(Dt / dt))) * dt


def run(model, cfg, state=None, callback=None, on_restart=None, result=None):
    """Algorithm loop from ``state`` (default: the initial condition) to cfg.T."""
    t_start = _time.perf_counter()
    state = initial_state(model, cfg) if state is None else state
    result = RunResult() if result is None else result
    tol = 1e-9 * max(1.0, cfg.T)
    adaptive = cfg.adaptive
    Dt = state.dt_next
    if Dt is None:
        Dt = adaptive.dt0 if adaptive is not None else cfg.Dt
    moment_times = sorted(set(cfg.moment_times))
    while state.t < cfg.T - tol:
        Dt_try = min(_snap(Dt, cfg.dt), cfg.T - state.t)
        retries = 0
        while True:
            try:
                new, offsets, rho = evolve_interval(model, state, Dt_try, cfg.dt, cfg.scheme, callback)
            except BlowUpError as err:
                raise BlowUpError(f"restart {state.j}: {err}", err.time) from err
            if adaptive is None:
                Dt_next = cfg.Dt
                break
            decision = adaptive_next_step(offsets, rho, Dt_try, adaptive)
            if decision.action == "advance":
                Dt_next = decision.dt
                break
            retries += 1
            result.rollbacks += 1
            if retries > adaptive.retries:
                raise BlowUpError(f"restart {state.j}: too many rollbacks at t={state.t:.6g}",
                                  state.t)
            Dt_try = min(_snap(decision.dt, cfg.dt), cfg.T - state.t)
            if Dt_try >= decision.dt * 2 or Dt_try <= 0:
                Dt_try = cfg.dt
        result.rho.append((state.t, offsets, rho))
        result.intervals.append(Dt_try)
        result.times.append(new.t)
        result.mean.append(new.mean.copy())
        result.variance.append(new.variance.copy())
        if any(abs(new.t - tm) <= tol for tm in moment_times):
            result.moments[round(new.t, 12)] = moments_from_pce(
                new.coeffs, new.basis, new.ensemble, orders=4, S=cfg.moment_samples,
                seed=cfg.seed, tag=new.j)
        state, info = restart(model, new, cfg)
        state.dt_next = Dt_next
        result.restarts += 1
        result.eigenvalues.append(info["kl"].eigenvalues)
        result.deficits.append((info["deficit"], info["trailing"]))
        result.jitters.append(info["jitter"])
        if cfg.record_history:
            result.history.append(info["history"])
        if on_restart is not None:
            on_restart(state, result)
        Dt = Dt_next
    result.state = state
    result.wall_time += _time.perf_counter() - t_start
    return result


# ---------------------------------------------------------------- shadow ensembles

def shadow_orthonormality(history, S, seed, first_kinds):
    """Push a fresh ensemble through recorded restart maps.

    After each restart the new basis is evaluated on the shadow samples and
    max_{a != b} |E[T_a T_b]| and max_a |E[T_a^2] - 1| are returned, over
    the basis functions that were not dropped as nearly dependent.
    """
    out = []
    ens = None
    for j, h in enumerate(history):
        if h is None:
            ens = None
            out.append((0.0, 0.0))
            continue
        rng = substream(seed, j + 1, STREAM_SHADOW)
        xi = draw_analytic(S, h.old_basis.kinds, rng)
        raw = pce_map(h.eta_pce, h.old_basis, joint_points(xi, ens))
        ens = SampleEnsemble(h.whitening(raw), j + 1, seed)
        xi_new = draw_analytic(S, h.new_basis.kinds, rng)
        pts = joint_points(xi_new, ens)
        T = evaluate_basis(h.new_basis.a, h.new_basis.index_set, pts)
        keep = np.setdiff1d(np.arange(T.shape[1]), h.new_basis.dropped)
        T = T[:, keep]
        G = T.T @ T / S
        off = G - np.diag(np.diag(G))
        out.append((float(np.abs(off).max()), float(np.abs(np.diag(G) - 1).max())))
    return out
