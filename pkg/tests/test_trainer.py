"""Schedules, step assembly, determinism and ablation wiring."""

import io
import json
import math

import numpy as np
import pytest

from gcdlib import compute as C
from gcdlib import trainer
from gcdlib.config import REQUIRED_KEYS, Config, load_config_file, parse_config_text
from gcdlib.data import AugConfig, sample_batch, synth_generate
from gcdlib.errors import ConfigError, NumericError
from gcdlib.model import init_model


def tiny_dataset():
    return synth_generate(4, 2, 12, 16, 0.15, seed=3)


def tiny_config(**overrides):
    base = dict(epochs=2, iters_per_epoch=3, batch_size=8, seed=5,
                rep_dim=16, sdl_dim=16, eval_every=2)
    base.update(overrides)
    return Config(**base)


class TestSchedules:
    def test_cosine_lr_boundaries(self):
        assert trainer.cosine_lr(0, 100, 0.1, 1e-4) == 0.1
        assert abs(trainer.cosine_lr(100, 100, 0.1, 1e-4) - 1e-4) < 1e-18
        assert abs(trainer.cosine_lr(50, 100, 0.1, 1e-4) - (0.1 + 1e-4) / 2) < 1e-15

    def test_teacher_temp_schedule(self):
        cfg = Config()
        assert trainer.teacher_temp(0, cfg) == 0.07
        assert abs(trainer.teacher_temp(15, cfg) - 0.055) < 1e-15
        assert trainer.teacher_temp(30, cfg) == 0.04
        assert trainer.teacher_temp(199, cfg) == 0.04


class TestStep:
    def test_zero_weights_reduce_to_gcd(self):
        ds = tiny_dataset()
        cfg = tiny_config(sdl_weight=0.0, adl_weight=0.0)
        state = init_model(ds.dim, 4, 2, cfg, seed=1)
        batch = sample_batch(ds, 8, 0.5, AugConfig(), np.random.default_rng(0))
        comp = trainer.compute_step(state, batch, cfg, 0.07)
        assert comp.report.l_all == comp.report.l_gcd

    def test_weighted_sum_identity(self):
        ds = tiny_dataset()
        cfg = tiny_config()
        state = init_model(ds.dim, 4, 2, cfg, seed=1)
        batch = sample_batch(ds, 8, 0.5, AugConfig(), np.random.default_rng(0))
        r = trainer.compute_step(state, batch, cfg, 0.07).report
        assert abs(r.l_all - (r.l_gcd + 0.01 * r.l_sdl + 1.0 * r.l_adl)) < 1e-12

    def test_step_bit_identical_across_runs(self):
        ds = tiny_dataset()
        cfg = tiny_config()
        reports = []
        for _ in range(2):
            state = init_model(ds.dim, 4, 2, cfg, seed=2)
            batch = sample_batch(ds, 8, 0.5, AugConfig(), np.random.default_rng(9))
            vel = {n: np.zeros_like(p.data) for n, p in state.params.items()}
            report, _ = trainer.train_step(state, batch, cfg, 0.1, 0.07, vel)
            reports.append(report.as_dict())
        assert reports[0] == reports[1]

    def test_non_finite_aborts_with_diagnostics(self):
        ds = tiny_dataset()
        cfg = tiny_config()
        state = init_model(ds.dim, 4, 2, cfg, seed=1)
        state.params["gcd.prototypes"].data[0, 0] = np.nan
        batch = sample_batch(ds, 8, 0.5, AugConfig(), np.random.default_rng(0))
        vel = {n: np.zeros_like(p.data) for n, p in state.params.items()}
        with pytest.raises(NumericError, match="l_"):
            trainer.train_step(state, batch, cfg, 0.1, 0.07, vel)

    def test_all_branches_disabled_rejected(self):
        ds = tiny_dataset()
        cfg = tiny_config(enable_gcd=False, enable_sdl=False, enable_adl=False,
                          enable_distribution_guidance=False)
        with pytest.raises(ConfigError):
            trainer.train(ds, cfg)


class TestTrain:
    def test_single_step_run(self):
        ds = tiny_dataset()
        cfg = tiny_config(epochs=1, iters_per_epoch=1)
        state, log = trainer.train(ds, cfg)
        assert len(log.steps) == 1
        assert len(log.epochs) == 1

    def test_default_iteration_count(self):
        ds = tiny_dataset()  # 36 unlabelled rows
        cfg = tiny_config(iters_per_epoch=0, batch_size=8, epochs=1)
        _, log = trainer.train(ds, cfg)
        assert len(log.steps) == math.ceil(36 / 4)

    def test_deterministic_logs(self):
        ds = tiny_dataset()
        streams = []
        for _ in range(2):
            buf = io.StringIO()
            trainer.train(ds, tiny_config(), log_stream=buf)
            streams.append(buf.getvalue())
        assert streams[0] == streams[1]

    def test_losses_active_from_step_zero(self):
        ds = tiny_dataset()
        _, log = trainer.train(ds, tiny_config(epochs=1, iters_per_epoch=1))
        first = log.steps[0]
        assert first["step"] == 0
        assert first["l_sdl"] > 0.0
        assert first["l_adl_s"] > 0.0
        assert first["l_gcd"] != 0.0

    def test_disabled_branches_freeze_their_params_and_match_baseline(self):
        ds = tiny_dataset()
        base_cfg = tiny_config(enable_sdl=False, enable_adl=False,
                               enable_distribution_guidance=False)
        state_a, _ = trainer.train(ds, base_cfg)
        # zero-weight but enabled branches leave the discovery trajectory intact
        zero_cfg = tiny_config(sdl_weight=0.0, adl_weight=0.0)
        state_b, _ = trainer.train(ds, zero_cfg)
        for name in ("gcd.prototypes", "adapter.layer0.W", "adapter.layer1.W",
                     "rep.layer0.W"):
            assert np.array_equal(state_a.params[name].data, state_b.params[name].data), name
        # frozen branch params never moved in the disabled run
        init = init_model(ds.dim, 4, 2, base_cfg, seed=base_cfg.seed)
        for name in ("sdl.pos", "sdl.layer0.W", "adl.prototypes"):
            assert np.array_equal(state_a.params[name].data, init.params[name].data), name

    def test_epoch_records_carry_eval_and_utilization(self):
        ds = tiny_dataset()
        _, log = trainer.train(ds, tiny_config(epochs=2, eval_every=2))
        assert "utilization_old" in log.epochs[0]
        assert "acc_all" not in log.epochs[0]
        assert "acc_all" in log.epochs[1]  # cadence hit + final


class TestConfigFiles:
    def test_round_trip(self):
        text = "epochs=3\nbatch_size=16\nlr=0.05\nseed=7\n# comment\nsdl_weight=0.02\n"
        cfg, _ = parse_config_text(text, require=REQUIRED_KEYS)
        assert cfg.epochs == 3 and cfg.sdl_weight == 0.02

    def test_missing_required_key_named(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("batch_size=16\nlr=0.05\nseed=7\n")
        with pytest.raises(ConfigError, match="epochs"):
            load_config_file(path)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="learning_rate"):
            parse_config_text("learning_rate=0.1\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("epochs=soon\n")
