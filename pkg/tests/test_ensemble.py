"""Harness checks: deterministic seeding across worker counts, lossless
persistence with digest guarding, idempotent aggregation, shard merging, and
the rate-fit plumbing."""

import numpy as np
import pytest

from ccflab.ensemble import (
    config_digest,
    convergence_study,
    load,
    merge,
    path_seed,
    persist,
    rate_fit,
    recompute_summaries,
    run_ensemble,
    wilson_ci,
)
from ccflab.integrate import SimConfig, power_law_field
from ccflab.noise import ExpDecayFn, GeneralH, LinearB, WienerSpec
from ccflab.spectral import Field, SpectralGrid

GRID = SpectralGrid(n_modes=64)


def small_cfg(**kw):
    noise = LinearB(b_fn=ExpDecayFn(0.4, 1.0), b_star=0.2)
    base = dict(grid=GRID, s=3.1, dt=1e-3, horizon=0.02, noise=noise, seed=11,
                record_every=5)
    base.update(kw)
    return SimConfig(**base)


def small_u0():
    rng = np.random.default_rng(3)
    return power_law_field(GRID, 3.1, rng, amplitude=0.2)


class TestSeeding:
    def test_xor_seeds(self):
        assert path_seed(0, 5) == 5
        assert path_seed(12, 0) == 12
        assert path_seed(2**63, 1) == 2**63 + 1

    def test_worker_count_invariance(self):
        cfg, u0 = small_cfg(), small_u0()
        r1 = run_ensemble(cfg, u0, 6, workers=1)
        r2 = run_ensemble(cfg, u0, 6, workers=2)
        assert r1.config_digest == r2.config_digest
        for a, b in zip(r1.per_path, r2.per_path):
            assert a.seed == b.seed and a.status == b.status
            assert a.extremes == b.extremes  # bitwise: same floats

    def test_rerun_identical(self):
        cfg, u0 = small_cfg(), small_u0()
        r1 = run_ensemble(cfg, u0, 4)
        r2 = run_ensemble(cfg, u0, 4)
        assert [p.extremes for p in r1.per_path] == [p.extremes for p in r2.per_path]


class TestResult:
    def test_zero_paths(self):
        r = run_ensemble(small_cfg(), small_u0(), 0)
        assert r.summaries["n_paths"] == 0
        assert r.per_path == []

    def test_digest_sensitivity(self):
        a = config_digest(small_cfg())
        b = config_digest(small_cfg(seed=12))
        assert a != b
        c = config_digest(small_cfg(noise=GeneralH(wiener=WienerSpec(n_components=2))))
        assert c not in (a, b)

    def test_aggregation_idempotent(self):
        r = run_ensemble(small_cfg(), small_u0(), 5)
        again = recompute_summaries(r.per_path)
        assert again == r.summaries


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        r = run_ensemble(small_cfg(), small_u0(), 5)
        p = tmp_path / "runs.jsonl"
        persist(r, str(p))
        back = load(str(p), expect_digest=r.config_digest)
        assert back.summaries == r.summaries
        assert [vars(a) for a in back.per_path] == [vars(a) for a in r.per_path]

    def test_digest_mismatch(self, tmp_path):
        r = run_ensemble(small_cfg(), small_u0(), 2)
        p = tmp_path / "runs.jsonl"
        persist(r, str(p))
        with pytest.raises(ValueError, match="digest mismatch"):
            load(str(p), expect_digest="deadbeef")

    def test_corrupted_line_reports_number(self, tmp_path):
        r = run_ensemble(small_cfg(), small_u0(), 3)
        p = tmp_path / "runs.jsonl"
        persist(r, str(p))
        lines = p.read_text().splitlines()
        lines[2] = lines[2][:-4] + "}}}"
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match=":3:"):
            load(str(p))

    def test_shard_merge(self, tmp_path):
        cfg, u0 = small_cfg(), small_u0()
        full = run_ensemble(cfg, u0, 6)
        shard_a = run_ensemble(cfg, u0, 6)
        shard_a.per_path = shard_a.per_path[:3]
        shard_b = run_ensemble(cfg, u0, 6)
        shard_b.per_path = shard_b.per_path[3:]
        merged = merge([shard_a, shard_b])
        assert merged.summaries == recompute_summaries(full.per_path)


class TestWilson:
    def test_contains_point_estimate(self):
        lo, hi = wilson_ci(30, 100)
        assert lo < 0.3 < hi

    def test_small_counts_stay_in_unit_interval(self):
        lo, hi = wilson_ci(0, 5)
        assert 0.0 <= lo < hi <= 1.0


class TestRateFit:
    def test_exact_power_law(self):
        pts = [(float(n), float(n) ** -2.0) for n in (8, 16, 32, 64)]
        slope, _, r2 = rate_fit(pts)
        assert slope == pytest.approx(-2.0, abs=1e-12)
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_single_point_error(self):
        with pytest.raises(ValueError):
            rate_fit([(8.0, 1.0)])

    def test_noisy_slope_recovery(self):
        rng = np.random.default_rng(4)
        pts = [(float(2**j), 2.0 ** (-1.3 * j) * np.exp(0.03 * rng.normal()))
               for j in range(3, 11)]
        slope, _, _ = rate_fit(pts)
        assert abs(slope - (-1.3 / np.log(2) * np.log(2))) < 0.1


class TestConvergenceStudy:
    def test_singleton_eps_rejected(self):
        with pytest.raises(ValueError):
            convergence_study(small_cfg(), [0.1], 2)

    def test_smoke_run_positive_slope(self):
        # tiny smoke version: gaps must grow with eps
        grid = SpectralGrid(n_modes=128)
        noise = LinearB(b_fn=ExpDecayFn(0.3, 1.0), b_star=0.1)
        cfg = SimConfig(grid=grid, s=3.1, dt=1e-3, horizon=0.1, noise=noise,
                        seed=7, record_every=10, cutoff_radius=50.0)
        out = convergence_study(cfg, [1 / 4, 1 / 8, 1 / 16], num_paths=3)
        gaps = [row["mean_sq_gap"] for row in out["table"]]
        assert gaps[0] > gaps[-1] > 0.0
        assert out["slope"] > 0.3
