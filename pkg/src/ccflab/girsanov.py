"""Linear-noise study: exponential-martingale change of measure, the random
transport equation it produces, characteristic tracking of the transported
maximum, the max-point identity, the pathwise Riccati bound, and the
first-passage lower bound on the blow-up probability.

For noise ``b(t) u dW`` the process ``beta = exp(int b dW - int b^2/2 dt)`` is
positive and ``v = u / beta`` solves the random PDE ``v_t + beta (Hv) v_x = 0``.
Along the characteristic started at the argmax of the initial datum,
``F = Lam v`` obeys ``dF/dt >= beta F^2 / 2``, which forces finite-time
blow-up once ``F(0)`` beats the noise level.  The scalar first-passage bound
``P{ exp(int_0^t b dW) > K for all t }`` is evaluated by Monte Carlo in
variance space (the law of the stochastic integral depends on ``b`` only
through its cumulative variance) next to the reflection-principle closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm as _norm

from .integrate import PathRecord, SimConfig, drift, simulate_path
from .noise import ExpDecayFn, LinearB, ZeroNoise
from .spectral import (
    Field,
    SpectralGrid,
    argmax_refined,
    dealiased_product,
    derivative,
    evaluate_at,
    frac_laplacian,
    hilbert,
    pad_field,
    sobolev_norm,
)

__all__ = [
    "GirsanovSpec",
    "CharacteristicTrack",
    "beta_path",
    "girsanov_residual",
    "run_random_pde",
    "track_max_characteristic",
    "identity_sv_residual",
    "riccati_check",
    "first_passage_oracle",
    "blowup_probability_bound",
    "blowup_ensemble",
    "wilson_interval",
]


@dataclass(frozen=True)
class GirsanovSpec:
    """Parameters of the linear-noise blow-up experiment."""

    b_fn: ExpDecayFn
    b_star: float
    threshold_k: float
    horizon: float
    riccati_tol: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.threshold_k < 1.0:
            raise ValueError("threshold K must lie in (0, 1)")
        if self.b_star <= 0.0 or self.horizon <= 0.0 or self.riccati_tol <= 0.0:
            raise ValueError("b_star, horizon, riccati_tol must be positive")

    def validate(self, samples: int = 4096):
        ts = np.linspace(0.0, self.horizon, samples)
        if np.any(np.array([self.b_fn(t) for t in ts]) ** 2 >= self.b_star):
            raise ValueError("sampled b(t)^2 must stay below b_star")
        return self


def beta_path(b_fn, increments: np.ndarray, dt: float) -> np.ndarray:
    """Exponential martingale on the step grid.

    Left-point Ito sum for ``int b dW`` and trapezoid for ``int b^2/2``;
    ``beta[0] = 1`` and ``beta[i]`` is the value at ``t_i = i dt``.
    """
    n = increments.shape[0]
    ts = np.arange(n) * dt
    b = np.asarray([b_fn(t) for t in ts])
    ito = np.concatenate([[0.0], np.cumsum(b * increments[:, 0])])
    b2 = np.asarray([b_fn(t) ** 2 for t in np.arange(n + 1) * dt])
    quad = np.concatenate([[0.0], np.cumsum(0.5 * (b2[:-1] + b2[1:]) * dt / 2.0)])
    return np.exp(ito - quad)


# -- random transport PDE -------------------------------------------------------


@dataclass
class CharacteristicTrack:
    """Trajectory of the transported maximum and its monitored quantities."""

    times: np.ndarray
    positions: np.ndarray       # phi(t, x0)
    f_values: np.ndarray        # Lam v at the tracked point
    beta: np.ndarray
    vx_residual: np.ndarray     # |d_x v| at the tracked point
    flagged: bool               # track left the well-resolved region


def _rk4_beta_step(v: Field, cfg: SimConfig, beta_i: float, dt: float) -> Field:
    k1 = beta_i * drift(v, cfg)
    k2 = beta_i * drift(v + (0.5 * dt) * k1, cfg)
    k3 = beta_i * drift(v + (0.5 * dt) * k2, cfg)
    k4 = beta_i * drift(v + dt * k3, cfg)
    return v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def run_random_pde(cfg: SimConfig, u0: Field, beta: np.ndarray,
                   record_every: int = 1, track: bool = False,
                   stop_threshold: float | None = None,
                   x0: float | None = None):
    """Integrate ``v_t + beta(t) (Hv) v_x = 0`` with the drift gate of ``cfg``.

    ``beta`` holds one value per step (frozen within the step, matching the
    order of the noise coupling).  Returns ``(times, fields)`` sampled every
    ``record_every`` steps and, when ``track`` is set, a
    :class:`CharacteristicTrack` integrated online with the same step size.
    """
    dt = cfg.dt
    n_steps = min(int(round(cfg.horizon / dt)), len(beta) - 1)
    v = u0
    times, fields = [0.0], [v]
    trk_t, trk_pos, trk_f, trk_beta, trk_vx = [], [], [], [], []
    flagged = False
    if track:
        phi = argmax_refined(v) if x0 is None else x0

        def observe(t, f, pos, beta_i):
            lam_v = frac_laplacian(f, 1.0)
            vx = derivative(f)
            trk_t.append(t)
            trk_pos.append(pos)
            trk_f.append(evaluate_at(lam_v, pos))
            trk_beta.append(beta_i)
            trk_vx.append(abs(evaluate_at(vx, pos)))

        observe(0.0, v, phi, beta[0])

    for i in range(n_steps):
        if track:
            # frozen-field 4th-order step of d phi/dt = beta Hv(phi)
            hv = hilbert(v)
            b_i = beta[i]
            g1 = b_i * evaluate_at(hv, phi)
            g2 = b_i * evaluate_at(hv, phi + 0.5 * dt * g1)
            g3 = b_i * evaluate_at(hv, phi + 0.5 * dt * g2)
            g4 = b_i * evaluate_at(hv, phi + dt * g3)
            phi = phi + (dt / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4)
        v = _rk4_beta_step(v, cfg, beta[i], dt)
        if v.diverged:
            flagged = True
            break
        t = (i + 1) * dt
        if track:
            observe(t, v, phi, beta[min(i + 1, beta.shape[0] - 1)])
            if trk_vx[-1] > 0.1 * max(derivative(v).max_abs(), 1e-300):
                flagged = True
        if (i + 1) % record_every == 0 or i == n_steps - 1:
            times.append(t)
            fields.append(v)
        if stop_threshold is not None and track and trk_f and trk_f[-1] >= stop_threshold:
            break

    track_obj = None
    if track:
        track_obj = CharacteristicTrack(np.array(trk_t), np.array(trk_pos),
                                        np.array(trk_f), np.array(trk_beta),
                                        np.array(trk_vx), flagged)
    return np.array(times), fields, track_obj


def track_max_characteristic(fields: list[Field], times: np.ndarray,
                             beta: np.ndarray, x0: float | None = None) -> CharacteristicTrack:
    """Track the transported maximum through a stored trajectory.

    Off-grid field values come from direct Fourier summation; the trajectory
    step is fourth order in the frozen-field approximation.
    """
    phi = argmax_refined(fields[0]) if x0 is None else x0
    pos, fval, vxres = [], [], []
    flagged = False
    for i, v in enumerate(fields):
        pos.append(phi)
        fval.append(evaluate_at(frac_laplacian(v, 1.0), phi))
        vx = abs(evaluate_at(derivative(v), phi))
        vxres.append(vx)
        if vx > 0.1 * max(derivative(v).max_abs(), 1e-300):
            flagged = True
        if i + 1 < len(fields):
            dt = times[i + 1] - times[i]
            hv = hilbert(v)
            b_i = beta[i]
            g1 = b_i * evaluate_at(hv, phi)
            g2 = b_i * evaluate_at(hv, phi + 0.5 * dt * g1)
            g3 = b_i * evaluate_at(hv, phi + 0.5 * dt * g2)
            g4 = b_i * evaluate_at(hv, phi + dt * g3)
            phi = phi + (dt / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4)
    return CharacteristicTrack(np.asarray(times, dtype=float), np.array(pos),
                               np.array(fval), np.asarray(beta, dtype=float)[: len(fields)],
                               np.array(vxres), flagged)


def girsanov_residual(cfg: SimConfig, u0: Field) -> float:
    """Coupled discrepancy between the linear-noise path and its transformed
    random-PDE twin: ``sup_t |u - beta v|_{H^{s-1}} / (1 + |u|_{H^{s-1}})``.

    Expected to shrink like ``dt^{1/2}`` under coupled refinement (the noise
    is the only first-order difference between the two discretizations).
    """
    if not isinstance(cfg.noise, LinearB):
        raise ValueError("girsanov_residual needs a LinearB noise model")
    base = replace(cfg, adapt=False, record_every=max(1, cfg.record_every),
                   snapshot_every=1)
    rec = simulate_path(base, u0)
    beta = beta_path(cfg.noise.b_fn, rec.wiener_increments, cfg.dt)
    vcfg = replace(base, noise=ZeroNoise())
    times_v, fields_v, _ = run_random_pde(vcfg, u0, beta,
                                          record_every=base.record_every)
    worst = 0.0
    steps_per_rec = base.record_every
    for j, (tv, v) in enumerate(zip(times_v, fields_v)):
        i_step = int(round(tv / cfg.dt))
        if i_step >= beta.shape[0] or j >= len(rec.snapshots):
            break
        tu, u = rec.snapshots[j]
        if abs(tu - tv) > 1e-12:
            continue
        bu = beta[i_step]
        num = sobolev_norm(u - bu * v, cfg.s - 1.0)
        den = 1.0 + sobolev_norm(u, cfg.s - 1.0)
        worst = max(worst, num / den)
    return worst


# -- the max-point identity -------------------------------------------------------


def identity_sv_residual(v: Field, z0: float | None = None) -> float:
    """Absolute residual of the max-point identity for ``vt = Hv``:

        Lam(vt Lam vt)(z0) + vt(z0) vt_xx(z0)
            = -1/2 (Lam v(z0))^2 - (1/pi) |eta|^2_{Hdot^{1/2}},

    with ``eta(y) = (vt(z0) - vt(y)) / (z0 - y)`` (removable singularity filled
    by the derivative value).  Exact on the line; on the periodic window the
    defect scales like ``1/period^2`` at fixed bump width, so evaluate on a
    wide window.
    """
    grid = v.grid
    if z0 is None:
        z0 = argmax_refined(v)
    vx_at = abs(evaluate_at(derivative(v), z0))
    if vx_at > 1e-6 * max(derivative(v).max_abs(), 1e-300):
        raise ValueError("field has no clean interior maximum")
    # effective support within half a period of the max point
    dist = np.abs((grid.x - z0 + 0.5 * grid.period) % grid.period - 0.5 * grid.period)
    far_mass = float(np.sum(np.abs(v.samples[dist > 0.35 * grid.period])))
    if far_mass > 1e-8 * float(np.sum(np.abs(v.samples)) + 1e-300):
        raise ValueError("field is not concentrated around its maximum")

    vt = hilbert(v)
    vp = pad_field(vt, 2)
    prod = Field.from_samples(vp.grid, vp.samples * frac_laplacian(vp, 1.0).samples)
    lhs = evaluate_at(frac_laplacian(prod, 1.0), z0) \
        + evaluate_at(vt, z0) * evaluate_at(derivative(derivative(vt)), z0)

    lam_v0 = evaluate_at(frac_laplacian(v, 1.0), z0)
    dz = (z0 - grid.x + 0.5 * grid.period) % grid.period - 0.5 * grid.period
    vt_s = vt.samples
    vt0 = evaluate_at(vt, z0)
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = (vt0 - vt_s) / dz
    on_grid = np.abs(dz) < 1e-9 * grid.period / grid.n_modes
    if np.any(on_grid):
        eta[on_grid] = evaluate_at(derivative(vt), z0)
    eta_f = Field.from_samples(grid, eta)
    hdot_half = float(np.sum(np.abs(grid.wavenumbers)
                             * np.abs(eta_f.coefficients) ** 2) * grid.period)
    rhs = -0.5 * lam_v0**2 - hdot_half / np.pi
    return abs(lhs - rhs)


# -- Riccati check ------------------------------------------------------------------


def riccati_check(track: CharacteristicTrack, tol: float,
                  f_max: float | None = None) -> tuple[float, bool]:
    """Worst normalized defect of ``dF/dt >= beta F^2 / 2`` along the track.

    Only steps with ``F > 0`` (and, if given, ``F <= f_max``) are scored.
    Returns ``(min_i [(dF_i/dt - beta_i F_i^2/2) / F_i^2], pass)`` with pass
    meaning the worst defect is above ``-tol``.
    """
    t, f, b = track.times, track.f_values, track.beta
    worst = np.inf
    for i in range(len(t) - 1):
        if f[i] <= 0.0 or (f_max is not None and f[i] > f_max):
            continue
        dt = t[i + 1] - t[i]
        resid = ((f[i + 1] - f[i]) / dt - 0.5 * b[i] * f[i] ** 2) / f[i] ** 2
        worst = min(worst, resid)
    if not np.isfinite(worst):
        return 0.0, True
    return float(worst), bool(worst >= -tol)


# -- scalar first-passage bound ------------------------------------------------------


def wilson_interval(successes: int, trials: int, z: float = 1.959964) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z**2 / trials
    center = (p + z**2 / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z**2 / (4 * trials**2)) / denom
    return center - half, center + half


def first_passage_oracle(b0: float, lam: float, K: float) -> float:
    """Closed form for ``P{ int_0^t b dW > ln K for all t }`` with
    ``b = b0 exp(-lam t)``: time-change to Brownian motion run to the total
    variance ``sigma^2 = b0^2/(2 lam)`` and apply the reflection principle,
    ``1 - 2 Phi(ln K / sigma)``."""
    if lam <= 0.0:
        raise ValueError("decay rate must be positive for a square-integrable b")
    sigma = b0 / np.sqrt(2.0 * lam)
    return float(1.0 - 2.0 * _norm.cdf(np.log(K) / sigma))


def _effective_variance(b_fn, horizon0: float) -> float:
    """Cumulative variance ``int_0^T b^2`` with T grown until the next octave
    contributes < 1e-9 of the total; raises when no such T exists (then the
    all-time event has probability 0 by Brownian recurrence)."""

    def chunk(t0, t1):
        ts = np.linspace(t0, t1, 2048)
        return float(np.trapezoid(np.asarray([b_fn(t) ** 2 for t in ts]), ts))

    t_end = max(horizon0, 1.0)
    total = chunk(0.0, t_end)
    if total <= 0.0:
        return 0.0
    for _ in range(24):
        tail = chunk(t_end, 2.0 * t_end)
        if tail <= 1e-9 * total:
            return total
        total += tail
        t_end *= 2.0
    raise ValueError("b(t) is not effectively square-integrable on [0, inf); "
                     "the all-time event would have probability 0 "
                     "(Brownian recurrence)")


def blowup_probability_bound(spec: GirsanovSpec, num_paths: int,
                             rng: np.random.Generator,
                             monitor_points: int = 16384,
                             block: int = 4096) -> dict:
    """Monte Carlo estimate of ``P{ int_0^t b dW > ln K for all t }``.

    The law of the integral depends on ``b`` only through its cumulative
    variance, so paths are simulated in variance space on a uniform monitoring
    grid covering all but ``e^{-2 lam T}`` of the total variance; the
    remaining tail enters through the Gaussian tail factor.  Alongside the
    grid frequency (which over-counts survival between monitoring points,
    Wilson interval attached) an unbiased bridge-corrected estimate is
    returned: each increment is weighted by the exact Brownian-bridge
    non-crossing probability.
    """
    b_fn = spec.b_fn
    sigma2_main = _effective_variance(b_fn, spec.horizon)
    a = float(np.log(spec.threshold_k))   # < 0
    if sigma2_main <= 0.0:
        # b identically zero: the integral is 0 > ln K surely
        return {"estimate": 1.0, "ci_lo": 1.0, "ci_hi": 1.0, "corrected": 1.0,
                "oracle": 1.0, "num_paths": num_paths, "monitor_points": 0}
    if isinstance(b_fn, ExpDecayFn):
        sigma2_total = b_fn.amplitude**2 / (2.0 * b_fn.rate)
        oracle = first_passage_oracle(b_fn.amplitude, b_fn.rate, spec.threshold_k)
    else:
        sigma2_total = sigma2_main
        oracle = None
    d_tau = sigma2_main / monitor_points
    sigma_tail2 = max(sigma2_total - sigma2_main, 0.0)

    surv_count = 0
    corrected_sum = 0.0
    done = 0
    while done < num_paths:
        m = min(block, num_paths - done)
        incs = rng.standard_normal((m, monitor_points)) * np.sqrt(d_tau)
        w = np.cumsum(incs, axis=1)
        alive = np.all(w > a, axis=1)
        surv_count += int(np.count_nonzero(alive))
        # bridge correction: P{min of bridge > a} per increment
        w_prev = np.concatenate([np.zeros((m, 1)), w[:, :-1]], axis=1)
        with np.errstate(over="ignore"):
            no_cross = -np.expm1(-2.0 * (w_prev - a) * (w - a) / d_tau)
        no_cross = np.clip(no_cross, 0.0, 1.0)
        weights = np.where(alive, np.prod(no_cross, axis=1), 0.0)
        if sigma_tail2 > 0.0:
            tail_keep = np.clip(2.0 * _norm.cdf((w[:, -1] - a) / np.sqrt(sigma_tail2)) - 1.0,
                                0.0, 1.0)
            weights = weights * np.where(alive, tail_keep, 0.0)
        corrected_sum += float(np.sum(weights))
        done += m

    est = surv_count / num_paths
    lo, hi = wilson_interval(surv_count, num_paths)
    return {
        "estimate": est,
        "ci_lo": lo,
        "ci_hi": hi,
        "corrected": corrected_sum / num_paths,
        "oracle": oracle,
        "num_paths": num_paths,
        "monitor_points": monitor_points,
    }


# -- SPDE blow-up ensemble -------------------------------------------------------------


@dataclass
class BlowupEnsembleResult:
    fraction: float
    n_blewup: int
    n_unresolved: int
    n_paths: int
    bound: dict
    passed: bool


@dataclass(frozen=True)
class _StatusTask:
    cfg: SimConfig
    u0: Field

    def __call__(self, seed: int) -> str:
        return simulate_path(replace(self.cfg, seed=seed), self.u0).status


def blowup_ensemble(cfg: SimConfig, spec: GirsanovSpec, u0: Field,
                    num_paths: int, mc_paths: int = 100_000,
                    workers: int = 1) -> BlowupEnsembleResult:
    """Fraction of linear-noise paths flagged as blown up, versus the scalar
    Monte Carlo lower bound.  Initial data must satisfy the max-point gradient
    condition ``Lam u0(argmax u0) > b_star / K``."""
    x0 = argmax_refined(u0)
    lam0 = evaluate_at(frac_laplacian(u0, 1.0), x0)
    if not lam0 > spec.b_star / spec.threshold_k:
        raise ValueError(f"initial datum violates the blow-up condition: "
                         f"Lam u0(x0) = {lam0:.4g} <= b*/K = "
                         f"{spec.b_star / spec.threshold_k:.4g}")
    noise = LinearB(b_fn=spec.b_fn, b_star=spec.b_star).validate(cfg.horizon)
    base = replace(cfg, noise=noise)
    bound = blowup_probability_bound(spec, mc_paths, np.random.default_rng(cfg.seed))

    from .ensemble import run_paths  # local import avoids a cycle

    statuses = run_paths(_StatusTask(base, u0), base.seed, num_paths, workers=workers)
    n_blew = sum(1 for s in statuses if s == "blewup")
    n_bad = sum(1 for s in statuses if s == "diverged")
    frac = n_blew / num_paths if num_paths else 0.0
    ci_half = 0.5 * (bound["ci_hi"] - bound["ci_lo"])
    passed = bool(num_paths == 0 or frac >= bound["estimate"] - 2.0 * ci_half)
    return BlowupEnsembleResult(frac, n_blew, n_bad, num_paths, bound, passed)
