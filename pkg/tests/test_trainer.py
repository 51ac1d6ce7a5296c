
import numpy as np
import pytest
import torch

from mcfnet.data import PairDataset, make_synthetic_pairs
from mcfnet.errors import CheckpointError, DataError
from mcfnet.trainer import (Checkpoint, LrDecay, TrainConfig, apply_ablation,
                            build_models, load_checkpoint, lr_at_epoch,
                            save_checkpoint, train)


def desk_config(**overrides):
    base = dict(total_epochs=2, stage1_end=1, batch_size=4, base_lr=2e-4,
                grm_width=4, cfem_width=4, fusion_width=4, disc_width=4,
                feature_channels=4, spade_hidden=4, seed=0)
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def tiny_dataset():
    return PairDataset(make_synthetic_pairs(4, 24, seed=2))


class TestConfig:
    def test_stage_bounds_validated(self):
        with pytest.raises(ValueError):
            TrainConfig(total_epochs=10, stage1_end=10)
        with pytest.raises(ValueError):
            TrainConfig(total_epochs=10, stage1_end=0)

    def test_round_trip_through_dict(self):
        cfg = desk_config()
        again = TrainConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig.from_dict({"no_such_field": 1})

    def test_lsgan_stub_not_implemented(self):
        with pytest.raises(ValueError):
            desk_config(gan_mode="lsgan")

    def test_unsupported_schedule_kind(self):
        with pytest.raises(ValueError):
            LrDecay(kind="cosine")


class TestLrSchedule:
    CFG = TrainConfig(total_epochs=1000, stage1_end=250, base_lr=2e-4)

    def test_stage1_boundary_holds_base_lr(self):
        assert lr_at_epoch(250, self.CFG) == 2e-4
        assert lr_at_epoch(1, self.CFG) == 2e-4

    def test_linear_midpoint(self):
        # epoch 625: 1 - 0.99 * (375/750) = 0.505
        assert lr_at_epoch(625, self.CFG) == pytest.approx(0.505 * 2e-4,
                                                           rel=1e-12)

    def test_endpoint_is_one_percent(self):
        assert lr_at_epoch(1000, self.CFG) == pytest.approx(0.01 * 2e-4,
                                                            rel=1e-12)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            lr_at_epoch(0, self.CFG)
        with pytest.raises(ValueError):
            lr_at_epoch(1001, self.CFG)


class TestAblationToggles:
    def test_variants_map_to_toggles(self):
        cfg = desk_config()
        assert apply_ablation(cfg, "no-texture").use_texture is False
        assert apply_ablation(cfg, "no-multiscale").use_multiscale is False
        assert apply_ablation(cfg, "no-cfem").use_hsv_cfem is False
        full = apply_ablation(cfg, "full")
        assert (full.use_texture, full.use_multiscale, full.use_hsv_cfem) == (
            True, True, True)

    def test_no_cfem_removes_group(self):
        bundle = build_models(desk_config(use_hsv_cfem=False))
        assert "cfem" not in bundle.parameter_groups()

    def test_group_membership_otherwise_unchanged(self):
        full = build_models(desk_config())
        ablated = build_models(desk_config(use_hsv_cfem=False))
        full_groups = full.parameter_groups()
        ablated_groups = ablated.parameter_groups()
        assert set(full_groups) - set(ablated_groups) == {"cfem"}
        for name in ablated_groups:
            assert ([p.shape for p in ablated_groups[name]]
                    == [p.shape for p in full_groups[name]])

    def test_no_texture_changes_no_parameters(self):
        full = build_models(desk_config())
        ablated = build_models(desk_config(use_texture=False))
        for name, params in full.parameter_groups().items():
            assert ([p.shape for p in ablated.parameter_groups()[name]]
                    == [p.shape for p in params])

    def test_no_multiscale_shrinks_only_grm(self):
        full = build_models(desk_config())
        ablated = build_models(desk_config(use_multiscale=False))
        full_groups = full.parameter_groups()
        ablated_groups = ablated.parameter_groups()
        assert set(full_groups) == set(ablated_groups)
        assert (sum(p.numel() for p in ablated_groups["grm"])
                < sum(p.numel() for p in full_groups["grm"]))
        for name in ("cfem", "fusion", "gb", "d_a", "d_b"):
            assert ([p.shape for p in ablated_groups[name]]
                    == [p.shape for p in full_groups[name]])


class TestScheduleContract:
    def test_stage_discipline_and_alternation(self, tiny_dataset):
        cfg = desk_config(total_epochs=4, stage1_end=2, batch_size=2)
        result = train(cfg, tiny_dataset)
        by_epoch = {}
        for rec in result.log.batches:
            by_epoch.setdefault(rec.epoch, []).append(rec.mode)
        for epoch in (1, 2):
            assert all(m == "paired" for m in by_epoch[epoch])
        for epoch in (3, 4):
            modes = by_epoch[epoch]
            paired = modes.count("paired")
            unpaired = modes.count("unpaired")
            assert abs(paired - unpaired) <= 1
            # strict 1:1 alternation when counts match
            assert modes[:4] == ["paired", "unpaired", "paired", "unpaired"]

    def test_epoch_rows_match_schedule(self, tiny_dataset):
        cfg = desk_config(total_epochs=2, stage1_end=1, batch_size=4)
        result = train(cfg, tiny_dataset)
        assert len(result.log.epochs) == 2
        # one paired epoch (1 batch) then one alternating epoch (2 batches)
        assert [r.mode for r in result.log.batches] == [
            "paired", "paired", "unpaired"]

    def test_unpaired_epochs_log_zero_pair_and_edge(self, tiny_dataset):
        cfg = desk_config(total_epochs=2, stage1_end=1, batch_size=4)
        result = train(cfg, tiny_dataset)
        stage2 = result.log.epochs[1]
        # stage-2 epoch mixes paired and unpaired; paired part keeps pair>0
        assert stage2.gen_pair > 0.0

    def test_requires_paired_data(self):
        with pytest.raises(DataError):
            train(desk_config(), PairDataset(pairs=[]))


class TestDeterminism:
    def test_identical_seeds_identical_losses(self, tiny_dataset):
        cfg = desk_config(total_epochs=2, stage1_end=1, batch_size=2, seed=11)
        a = train(cfg, tiny_dataset)
        b = train(cfg, tiny_dataset)
        fa = a.log.epochs[-1]
        fb = b.log.epochs[-1]
        for field in ("gen_total", "gen_gan", "gen_pair", "disc_a", "disc_b"):
            assert abs(getattr(fa, field) - getattr(fb, field)) <= 1e-6

    def test_different_seed_changes_run(self, tiny_dataset):
        a = train(desk_config(seed=1), tiny_dataset)
        b = train(desk_config(seed=2), tiny_dataset)
        assert a.log.epochs[-1].gen_total != b.log.epochs[-1].gen_total


class TestGradientFlow:
    def test_every_group_receives_gradient_after_one_step(self, tiny_dataset):
        cfg = desk_config(total_epochs=2, stage1_end=1)
        bundle = build_models(cfg)
        from mcfnet.data import epoch_batches
        from mcfnet.trainer import _Trainer
        batch = epoch_batches(tiny_dataset, "paired", 4,
                              np.random.default_rng(0))[0]
        trainer = _Trainer(cfg, bundle)
        trainer.step(batch)
        for name, params in bundle.parameter_groups().items():
            total = sum(float(p.grad.abs().sum()) for p in params
                        if p.grad is not None)
            assert total > 0.0, f"group {name} accumulated no gradient"

    def test_optimizer_step_isolation(self, tiny_dataset):
        cfg = desk_config()
        bundle = build_models(cfg)
        from mcfnet.data import epoch_batches
        from mcfnet.trainer import _Trainer
        trainer = _Trainer(cfg, bundle)
        batch = epoch_batches(tiny_dataset, "paired", 4,
                              np.random.default_rng(0))[0]

        disc_params = (list(bundle.d_rgb.parameters())
                       + list(bundle.d_nir.parameters()))
        disc_before = [p.detach().clone() for p in disc_params]
        _, fake_rgb, fake_nir = trainer.generator_phase(batch)
        assert all(torch.equal(a, b)
                   for a, b in zip(disc_before, disc_params))

        gen_before = [p.detach().clone()
                      for p in bundle.generator_parameters()]
        trainer.discriminator_phase(batch, fake_rgb, fake_nir)
        assert all(torch.equal(a, b)
                   for a, b in zip(gen_before,
                                   bundle.generator_parameters()))
        # and the discriminators did move
        assert any(not torch.equal(a, b)
                   for a, b in zip(disc_before, disc_params))


class TestNumericFailure:
    def test_non_finite_loss_aborts_with_batch_ids(self, tiny_dataset,
                                                   tmp_path, monkeypatch):
        import mcfnet.trainer as trainer_mod
        from mcfnet.errors import NumericError

        def poisoned(*args, **kwargs):
            return torch.tensor(float("nan"))

        monkeypatch.setattr(trainer_mod, "generator_gan_loss", poisoned)
        with pytest.raises(NumericError, match="synth_"):
            train(desk_config(), tiny_dataset, out_dir=tmp_path)
        assert (tmp_path / "failure_dump.json").exists()


class TestCheckpoint:
    def test_save_load_bit_exact_forward(self, tiny_dataset, tmp_path):
        cfg = desk_config()
        result = train(cfg, tiny_dataset, out_dir=tmp_path)
        assert result.checkpoint_path is not None
        x = torch.rand(1, 1, 24, 24, generator=torch.Generator().manual_seed(5))
        result.bundle.train_mode(False)
        with torch.no_grad():
            expected, _ = result.bundle.colorizer.grm(x, None)

        ckpt = load_checkpoint(result.checkpoint_path)
        fresh = build_models(ckpt.config)
        ckpt.restore(fresh)
        fresh.train_mode(False)
        with torch.no_grad():
            got, _ = fresh.colorizer.grm(x, None)
        assert torch.equal(expected, got)

    def test_truncated_file_fails_checksum(self, tiny_dataset, tmp_path):
        cfg = desk_config()
        bundle = build_models(cfg)
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, bundle, config=cfg)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) - 64])
        with pytest.raises(CheckpointError, match="checksum"):
            load_checkpoint(path)

    def test_corrupt_payload_fails_checksum(self, tmp_path):
        cfg = desk_config()
        bundle = build_models(cfg)
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, bundle, config=cfg)
        raw = bytearray(path.read_bytes())
        raw[100] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="checksum"):
            load_checkpoint(path)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.pt"
        path.write_bytes(b"garbage bytes")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_width_mismatch_names_group(self, tmp_path):
        cfg = desk_config()
        bundle = build_models(cfg)
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, bundle, config=cfg)
        ckpt = load_checkpoint(path)
        wider = build_models(desk_config(grm_width=8))
        with pytest.raises(CheckpointError, match="grm"):
            ckpt.restore(wider)

    def test_sidecar_written(self, tmp_path):
        cfg = desk_config()
        bundle = build_models(cfg)
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, bundle, config=cfg, epoch=7)
        sidecar = path.with_name("ckpt.pt.json")
        assert sidecar.exists()

    def test_log_files_written(self, tiny_dataset, tmp_path):
        cfg = desk_config()
        train(cfg, tiny_dataset, out_dir=tmp_path)
        assert (tmp_path / "training_log.csv").exists()
        assert (tmp_path / "training_log.jsonl").exists()
        assert (tmp_path / "batches.csv").exists()
