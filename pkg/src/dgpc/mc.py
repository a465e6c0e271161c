"""Monte Carlo reference solver with a weak second-order Runge-Kutta scheme.

Paths are advanced in batches in Fourier space. The diffusion is handled by
an integrating factor, the drift by a Heun predictor-corrector, and the
additive noise enters once per step (scaled to the step midpoint).
"""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .errors import BlowUpError

log = logging.getLogger(__name__)

MAX_EXCLUDED = 0.01


@dataclass
class MCConfig:
    n_samples: int
    dt: float
    T: float
    seed: int = 0
    batch: int = 2000
    times: tuple = ()
    n_visc: int = 0  # viscosity samples (random viscosity only); paths split evenly

    def __post_init__(self):
        if self.n_samples < 1 or self.dt <= 0 or self.T <= 0:
            raise ValueError("need n_samples >= 1, dt > 0 and T > 0")


def weak_rk2_step(uh, drift, E, Ehalf, h, noise):
    """One step on integrating-factor variables.

    ``noise`` is the modal increment sigma_hat * dW of this step. With zero
    drift and E = 1 the update adds exactly ``noise``.
    """
    A = E * uh
    B = drift(uh)
    B *= E
    kick = Ehalf * noise
    A += kick
    pred = B * h
    pred += A
    N1 = drift(pred)
    B += N1
    B *= 0.5 * h
    A += B
    return A


class MomentAccumulator:
    """Streaming mean and central moments up to order four (pairwise merge)."""

    def __init__(self):
        self.n = 0
        self.mean = self.M2 = self.M3 = self.M4 = None

    def add(self, x):
        """Add a batch of samples stacked on axis 0."""
        nb = x.shape[0]
        if nb == 0:
            return
        mb = x.mean(axis=0)
        d = x - mb
        d2 = d * d
        batch = (nb, mb, d2.sum(axis=0), (d2 * d).sum(axis=0), (d2 * d2).sum(axis=0))
        self._merge(*batch)

    def _merge(self, nb, mb, M2b, M3b, M4b):
        if self.n == 0:
            self.n, self.mean, self.M2, self.M3, self.M4 = nb, mb, M2b, M3b, M4b
            return
        na = self.n
        n = na + nb
        delta = mb - self.mean
        d2 = delta * delta
        M4 = (self.M4 + M4b
              + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / n ** 3
              + 6 * d2 * (na * na * M2b + nb * nb * self.M2) / n ** 2
              + 4 * delta * (na * M3b - nb * self.M3) / n)
        M3 = (self.M3 + M3b + d2 * delta * na * nb * (na - nb) / n ** 2
              + 3 * delta * (na * M2b - nb * self.M2) / n)
        M2 = self.M2 + M2b + d2 * na * nb / n
        self.mean = self.mean + delta * nb / n
        self.n, self.M2, self.M3, self.M4 = n, M2, M3, M4

    def result(self):
        n = self.n
        var = self.M2 / n
        m = self.mean
        c3 = self.M3 / n
        c4 = self.M4 / n
        return {
            "mean": m, "variance": var, "third": c3, "fourth": c4,
            "raw1": m, "raw2": var + m ** 2,
            "raw3": c3 + 3 * m * var + m ** 3,
            "raw4": c4 + 4 * m * c3 + 6 * m ** 2 * var + m ** 4,
        }


@dataclass
class MCResult:
    moments: dict = field(default_factory=dict)
    n_used: int = 0
    excluded: int = 0
    wall_time: float = 0.0


def _noise_profiles(model):
    """Modal noise shape per Brownian component, broadcast to (p, *modal)."""
    if model.n_brownian == 1:
        prof = model.sigma_hat[None]
        return [prof]
    a, b = model.forcing_modal()
    zeros = np.zeros_like(a)
    extra = [zeros] * (model.ncomp - 1)
    return [np.stack([a] + extra), np.stack([b] + extra)]


def mc_run(model, cfg):
    """Moments 1-4 of the solution at ``cfg.times`` (default: the final time)."""
    t0 = _time.perf_counter()
    grid = model.grid
    h = cfg.dt
    nsteps = int(round(cfg.T / h))
    times = cfg.times or (cfg.T,)
    out_steps = {int(round(t / h)): t for t in times}
    acc = {s: MomentAccumulator() for s in out_steps}
    profiles = _noise_profiles(model)
    u0 = sp.to_modal(model.initial_fields(), grid)
    visc = getattr(model, "viscosity", None)
    random_visc = visc is not None and visc.random
    n_visc = max(1, cfg.n_visc) if random_visc else 1
    per_visc = cfg.n_samples // n_visc
    excluded = 0
    batch_id = 0
    for iv in range(n_visc):
        if random_visc:
            vrng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1, iv]))
            U = vrng.uniform(-1.0, 1.0, (1, visc.D_z))
            nu_field = visc.nu_field(U)[0]
            nubar = float(np.mean(nu_field))
            if grid.d == 2:
                nu_arg = np.full(1, nubar)
                rates = -nubar * grid.k2
                rates = np.stack([rates] * model.ncomp)
            else:
                nu_arg = nu_field
                rates = (-nubar * grid.k2)[None]
            drift_fn = model.path_nonlinear(nu_arg)
        else:
            nubar = None
            rates = np.broadcast_to(model.stiff_rates(), (model.ncomp,) + grid.modal_shape)
            drift_fn = model.path_nonlinear(None)
        E = np.exp(rates * h)
        Ehalf = np.exp(rates * h / 2)

        def drift(u):
            if grid.d == 1:
                return drift_fn(u[:, 0], nubar)[:, None]
            return drift_fn(u, nubar)

        done = 0
        while done < per_visc:
            B = min(cfg.batch, per_visc - done)
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2, batch_id]))
            batch_id += 1
            uh = np.broadcast_to(u0, (B,) + u0.shape).copy()
            alive = np.ones(B, dtype=bool)
            for k in range(1, nsteps + 1):
                dW = rng.standard_normal((len(profiles), B)) * np.sqrt(h)
                noise = sum(dW[c].reshape((B,) + (1,) * u0.ndim) * profiles[c]
                            for c in range(len(profiles)))
                uh = weak_rk2_step(uh, drift, E, Ehalf, h, noise)
                if k % 50 == 0 or k in out_steps:
                    bad = ~np.all(np.isfinite(uh.reshape(B, -1)), axis=1) & alive
                    if np.any(bad):
                        alive &= ~bad
                        uh[bad] = 0.0
                if k in out_steps:
                    phys = sp.to_physical(uh[alive], grid)
                    acc[k].add(phys)
            excluded += int((~alive).sum())
            done += B
    n_total = per_visc * n_visc
    if excluded > MAX_EXCLUDED * n_total:
        raise BlowUpError(f"{excluded} of {n_total} Monte Carlo paths blew up", cfg.T)
    if excluded:
        log.warning("excluded %d blown-up paths", excluded)
    res = MCResult(n_used=n_total - excluded, excluded=excluded)
    for k, t in out_steps.items():
        res.moments[round(t, 12)] = acc[k].result()
    res.wall_time = _time.perf_counter() - t0
    return res
