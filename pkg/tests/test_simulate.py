"""Slow-fast Euler-Maruyama scheme: determinism, batching, failure handling,
and observation-grid I/O."""

import math

import numpy as np
import pytest

import sfbm
from sfbm import simulate as sim_mod
from sfbm.simulate import (
    ObservationSeries,
    SimConfig,
    SimulationError,
    SlowFastModel,
    StiffnessWarning,
    _simulate_batch,
    subsample,
)

CFG = SimConfig(epsilon=0.1, eta=1e-2, T=1.0, fine_steps=2000, seed=99)


def _seed_seqs(k: int, entropy: int = 31415):
    return [np.random.SeedSequence(entropy=entropy, spawn_key=(0, r)) for r in range(k)]


class TestObservationSeries:
    def test_promotes_one_dimensional(self):
        obs = ObservationSeries(T=1.0, n=4, values=np.arange(5.0))
        assert obs.values.shape == (5, 1)
        assert obs.dim == 1
        np.testing.assert_allclose(obs.times, [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_row_count_validated(self):
        with pytest.raises(ValueError):
            ObservationSeries(T=1.0, n=4, values=np.zeros((4, 1)))

    def test_positive_horizon(self):
        with pytest.raises(ValueError):
            ObservationSeries(T=0.0, n=2, values=np.zeros(3))

    def test_subsample(self):
        obs = ObservationSeries(T=2.0, n=8, values=np.arange(9.0))
        sub = subsample(obs, 4)
        assert sub.n == 4 and sub.T == 2.0
        np.testing.assert_array_equal(sub.values[:, 0], [0, 2, 4, 6, 8])

    def test_subsample_divisor_only(self):
        obs = ObservationSeries(T=1.0, n=8, values=np.arange(9.0))
        with pytest.raises(ValueError):
            subsample(obs, 3)


class TestEulerMaruyama:
    def test_deterministic_given_seed(self):
        model = sfbm.get_model("constant_sigma")
        a, _ = sfbm.euler_maruyama(model, [1.0], 0.85, CFG, record_every=10)
        b, _ = sfbm.euler_maruyama(model, [1.0], 0.85, CFG, record_every=10)
        np.testing.assert_array_equal(a.values, b.values)

    def test_recording_grid(self):
        model = sfbm.get_model("constant_sigma")
        slow, fast = sfbm.euler_maruyama(model, [1.0], 0.85, CFG, record_every=100)
        assert slow.n == 20 and fast.n == 20
        assert slow.values.shape == (21, 1)
        assert slow.values[0, 0] == model.x0[0]

    def test_record_every_must_divide(self):
        model = sfbm.get_model("constant_sigma")
        with pytest.raises(ValueError):
            sfbm.euler_maruyama(model, [1.0], 0.85, CFG, record_every=3)

    def test_recording_is_pure_subsampling(self):
        # recorded coarse path equals the subsampled fine path
        model = sfbm.get_model("constant_sigma")
        fine, _ = sfbm.euler_maruyama(model, [1.0], 0.85, CFG, record_every=1)
        coarse, _ = sfbm.euler_maruyama(model, [1.0], 0.85, CFG, record_every=40)
        np.testing.assert_array_equal(subsample(fine, 50).values, coarse.values)

    def test_stiffness_warning(self):
        # eta below 10 steps but still inside the explicit-Euler stability
        # region (dt/eta < 2)
        model = sfbm.get_model("constant_sigma")
        cfg = SimConfig(epsilon=0.1, eta=8e-3, T=1.0, fine_steps=100, seed=1)
        with pytest.warns(StiffnessWarning):
            sfbm.euler_maruyama(model, [1.0], 0.85, cfg)

    def test_circle_wrap(self):
        model = sfbm.get_model("variable_sigma")
        cfg = SimConfig(epsilon=0.1, eta=1e-2, T=1.0, fine_steps=5000, seed=3)
        _, fast = sfbm.euler_maruyama(model, [1.0], 0.85, cfg, record_every=50)
        assert np.all(fast.values >= 0.0) and np.all(fast.values < 2 * math.pi)

    def test_explosion_raises_with_step(self):
        exploding = SlowFastModel(
            name="exploding",
            slow_dim=1,
            fast_dim=1,
            noise_dim=1,
            drift=lambda theta, x, y: theta[0] * x * 1e200,
            diffusion=lambda y: np.ones(y.shape[:-1] + (1, 1)),
            fast_drift=lambda y: -y,
            fast_diffusion=lambda y: np.ones(y.shape[:-1] + (1, 1)),
            x0=(1.0,),
            y0=(0.0,),
            theta_box=((0.1, 3.0),),
        )
        with pytest.raises(SimulationError) as err:
            sfbm.euler_maruyama(exploding, [1.0], 0.85, CFG)
        assert err.value.step >= 0

    def test_small_noise_limit_tracks_averaged_flow(self):
        # epsilon -> 0 removes the slow noise; what remains is the O(sqrt(eta))
        # fluctuation of the fast component's ergodic average, so compare the
        # batch mean of X_T against exp(theta T / 2)
        model = sfbm.get_model("constant_sigma")
        cfg = SimConfig(epsilon=1e-12, eta=1e-3, T=1.0, fine_steps=20000, seed=11)
        slow, _, fail = _simulate_batch(
            model, np.array([1.0]), 0.85, cfg, _seed_seqs(8), record_every=20000
        )
        assert np.all(fail == -1)
        assert float(np.mean(slow[:, -1, 0])) == pytest.approx(math.exp(0.5), abs=0.05)


class TestBatching:
    def test_batch_matches_single_runs(self):
        model = sfbm.get_model("constant_sigma")
        seqs = _seed_seqs(5)
        slow, _, fail = _simulate_batch(model, np.array([1.0]), 0.85, CFG, seqs, record_every=100)
        assert np.all(fail == -1)
        for r, seq in enumerate(seqs):
            one, _, _ = _simulate_batch(model, np.array([1.0]), 0.85, CFG, [seq], record_every=100)
            np.testing.assert_array_equal(slow[r], one[0])

    def test_chunking_is_invisible(self, monkeypatch):
        model = sfbm.get_model("constant_sigma")
        seqs = _seed_seqs(7)
        full, _, _ = _simulate_batch(model, np.array([1.0]), 0.85, CFG, seqs, record_every=100)
        monkeypatch.setattr(sim_mod, "_CHUNK_BYTES", 2 * 8 * CFG.fine_steps * 2)  # ~2 reps per chunk
        split, _, _ = _simulate_batch(model, np.array([1.0]), 0.85, CFG, seqs, record_every=100)
        np.testing.assert_array_equal(full, split)

    def test_failed_rows_are_frozen_and_flagged(self):
        # drift explodes wherever the path exceeds a threshold; all reps fail
        # here, each at its own step, and values stay finite (frozen)
        exploding = SlowFastModel(
            name="threshold",
            slow_dim=1,
            fast_dim=1,
            noise_dim=1,
            drift=lambda theta, x, y: x * 1e250,
            diffusion=lambda y: np.ones(y.shape[:-1] + (1, 1)),
            fast_drift=lambda y: -y,
            fast_diffusion=lambda y: np.ones(y.shape[:-1] + (1, 1)),
            x0=(1.0,),
            y0=(0.0,),
            theta_box=((0.1, 3.0),),
        )
        slow, _, fail = _simulate_batch(
            exploding, np.array([1.0]), 0.85, CFG, _seed_seqs(3), record_every=100
        )
        assert np.all(fail >= 0)
        assert np.all(np.isfinite(slow))

    def test_fast_recording_optional(self):
        model = sfbm.get_model("constant_sigma")
        _, fast, _ = _simulate_batch(model, np.array([1.0]), 0.85, CFG, _seed_seqs(2), record_every=100)
        assert fast is None
        _, fast, _ = _simulate_batch(
            model, np.array([1.0]), 0.85, CFG, _seed_seqs(2), record_every=100, record_fast=True
        )
        assert fast.shape == (2, 21, 1)


class TestIo:
    def test_roundtrip_exact(self, tmp_path, rng):
        obs = ObservationSeries(T=1.5, n=16, values=rng.normal(size=(17, 2)))
        path = tmp_path / "obs.csv"
        sfbm.write_observations(path, obs)
        back = sfbm.read_observations(path)
        assert back.T == obs.T and back.n == obs.n
        np.testing.assert_array_equal(back.values, obs.values)  # %.17g is lossless

    def test_header_names(self, tmp_path):
        obs = ObservationSeries(T=1.0, n=2, values=np.zeros((3, 2)))
        path = tmp_path / "obs.csv"
        sfbm.write_observations(path, obs)
        header = path.read_text().splitlines()[0]
        assert header.split(",") == ["t", "component_1", "component_2"]

    def test_nonuniform_grid_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,component_1\n0,0\n0.5,1\n0.51,2\n")
        with pytest.raises(ValueError):
            sfbm.read_observations(path)

    def test_grid_must_start_at_zero(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,component_1\n0.5,0\n1.0,1\n1.5,2\n")
        with pytest.raises(ValueError):
            sfbm.read_observations(path)


class TestModelValidation:
    def test_validate_catches_bad_drift_shape(self):
        bad = SlowFastModel(
            name="bad",
            slow_dim=1,
            fast_dim=1,
            noise_dim=1,
            drift=lambda theta, x, y: np.zeros((3, 7)),
            diffusion=lambda y: np.ones(y.shape[:-1] + (1, 1)),
            fast_drift=lambda y: -y,
            fast_diffusion=lambda y: np.ones(y.shape[:-1] + (1, 1)),
            x0=(1.0,),
            y0=(0.0,),
            theta_box=((0.1, 3.0),),
        )
        with pytest.raises(ValueError):
            bad.validate()

    def test_validate_accepts_builtin_models(self):
        for name in ("constant_sigma", "variable_sigma"):
            sfbm.get_model(name).validate()

    def test_theta_box_ordering(self):
        with pytest.raises(ValueError):
            sfbm.models.constant_sigma_model(theta_box=((3.0, 0.1),))

    def test_sim_config_validation(self):
        with pytest.raises(ValueError):
            SimConfig(epsilon=0.0, eta=1e-2)
        with pytest.raises(ValueError):
            SimConfig(epsilon=0.1, eta=1e-2, fine_steps=0)
