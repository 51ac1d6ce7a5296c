"""Two-stage CycleGAN-style optimization loop, checkpointing, and logging.

Stage 1 (epochs 1..stage1_end) consumes paired batches only and applies all
four objectives. Stage 2 alternates paired and unpaired batches 1:1 per
epoch; unpaired batches skip the pair and edge terms since those need
aligned ground truth. Every batch takes one generator update followed by one
update of each discriminator. The learning rate holds at base_lr through
stage 1, then decays linearly to 1% of base_lr at the final epoch.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .colorspace import rgb_to_hsv_array
from .data import AugmentSpec, Batch, PairDataset, augment, augment_plane, epoch_batches
from .errors import CheckpointError, DataError, NumericError
from .losses import (LossBreakdown, LossWeights, discriminator_loss,
                     generator_gan_loss, cycle_loss, edge_loss,
                     hsv_supervision_loss, pair_loss, total_loss)
from .model import (ColorizationNetwork, ModelBundle, init_weights)
from .blocks import PatchDiscriminator
from .grm import GbGenerator

CHECKPOINT_MAGIC = b"MCFN"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LrDecay:
    """Learning-rate schedule descriptor; only linear decay is implemented."""

    kind: str = "linear"
    end_factor: float = 0.01

    def __post_init__(self):
        if self.kind != "linear":
            raise ValueError(f"unsupported lr schedule kind: {self.kind!r}")
        if not 0.0 < self.end_factor <= 1.0:
            raise ValueError(f"end_factor must be in (0,1], got {self.end_factor}")


@dataclass(frozen=True)
class TrainConfig:
    total_epochs: int = 1000
    stage1_end: int = 250
    batch_size: int = 1
    base_lr: float = 2e-4
    lr_decay: LrDecay = field(default_factory=LrDecay)
    weights: LossWeights = field(default_factory=LossWeights)
    grm_width: int = 64
    cfem_width: int = 64
    fusion_width: int = 64
    disc_width: int = 64
    feature_channels: int = 64
    spade_hidden: int = 64
    use_texture: bool = True
    use_multiscale: bool = True
    use_hsv_cfem: bool = True
    gan_mode: str = "nonsaturating"     # "lsgan" reserved, not implemented
    adam_betas: tuple[float, float] = (0.5, 0.999)
    augment: AugmentSpec | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.stage1_end < self.total_epochs:
            raise ValueError(
                f"need 0 < stage1_end < total_epochs, got "
                f"{self.stage1_end}, {self.total_epochs}")
        if self.base_lr <= 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.gan_mode != "nonsaturating":
            raise ValueError(
                f"gan_mode {self.gan_mode!r} is reserved but not implemented")
        for name in ("grm_width", "cfem_width", "fusion_width", "disc_width",
                     "feature_channels", "spade_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        if "lr_decay" in data and isinstance(data["lr_decay"], dict):
            data["lr_decay"] = LrDecay(**data["lr_decay"])
        if "weights" in data and isinstance(data["weights"], dict):
            data["weights"] = LossWeights(**data["weights"])
        if "augment" in data and isinstance(data["augment"], dict):
            aug = dict(data["augment"])
            for key in ("resize_range", "contrast_range"):
                if key in aug and isinstance(aug[key], list):
                    aug[key] = tuple(aug[key])
            data["augment"] = AugmentSpec(**aug)
        if "adam_betas" in data and isinstance(data["adam_betas"], list):
            data["adam_betas"] = tuple(data["adam_betas"])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config field(s): {sorted(unknown)}")
        return cls(**data)


def apply_ablation(config: TrainConfig, variant: str) -> TrainConfig:
    """Map an ablation variant name onto the config toggles."""
    if variant == "full":
        return replace(config, use_texture=True, use_multiscale=True,
                       use_hsv_cfem=True)
    if variant == "no-texture":
        return replace(config, use_texture=False)
    if variant == "no-multiscale":
        return replace(config, use_multiscale=False)
    if variant == "no-cfem":
        return replace(config, use_hsv_cfem=False)
    raise ValueError(f"unknown ablation variant: {variant!r}")


def lr_at_epoch(epoch: int, config: TrainConfig) -> float:
    """base_lr through stage 1, then linear decay to end_factor * base_lr."""
    if not 1 <= epoch <= config.total_epochs:
        raise ValueError(
            f"epoch {epoch} outside [1, {config.total_epochs}]")
    if epoch <= config.stage1_end:
        return config.base_lr
    span = config.total_epochs - config.stage1_end
    frac = (epoch - config.stage1_end) / span
    return config.base_lr * (1.0 - (1.0 - config.lr_decay.end_factor) * frac)


def build_models(config: TrainConfig) -> ModelBundle:
    """Construct all networks with seeded, reproducible initialization."""
    torch.manual_seed(config.seed)
    colorizer = ColorizationNetwork(
        grm_width=config.grm_width, cfem_width=config.cfem_width,
        fusion_width=config.fusion_width,
        feature_channels=config.feature_channels,
        spade_hidden=config.spade_hidden, use_texture=config.use_texture,
        use_multiscale=config.use_multiscale,
        use_hsv_cfem=config.use_hsv_cfem)
    gb = GbGenerator(config.grm_width)
    d_rgb = PatchDiscriminator(3, config.disc_width)
    d_nir = PatchDiscriminator(1, config.disc_width)
    bundle = ModelBundle(colorizer, gb, d_rgb, d_nir)
    for module in (colorizer, gb, d_rgb, d_nir):
        init_weights(module)
    return bundle


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    gen_gan: float
    gen_pair: float
    gen_cyc: float
    gen_edge: float
    gen_total: float
    disc_a: float
    disc_b: float


@dataclass
class BatchRecord:
    epoch: int
    step: int
    mode: str
    gan: float = 0.0
    pair: float = 0.0
    cyc: float = 0.0
    edge: float = 0.0
    total: float = 0.0


@dataclass
class TrainingLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    batches: list[BatchRecord] = field(default_factory=list)

    _EPOCH_FIELDS = ("epoch", "lr", "gen_gan", "gen_pair", "gen_cyc",
                     "gen_edge", "gen_total", "disc_a", "disc_b")

    def write(self, out_dir: Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "training_log.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self._EPOCH_FIELDS)
            for rec in self.epochs:
                writer.writerow([getattr(rec, f) for f in self._EPOCH_FIELDS])
        with open(out_dir / "training_log.jsonl", "w") as fh:
            for rec in self.epochs:
                fh.write(json.dumps(asdict(rec)) + "\n")
        with open(out_dir / "batches.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "step", "mode", "gan", "pair", "cyc",
                             "edge", "total"])
            for rec in self.batches:
                writer.writerow([rec.epoch, rec.step, rec.mode, rec.gan,
                                 rec.pair, rec.cyc, rec.edge, rec.total])


@dataclass
class TrainResult:
    bundle: ModelBundle
    log: TrainingLog
    config: TrainConfig
    checkpoint_path: Path | None = None


def hsv_target(rgb_batch: torch.Tensor) -> torch.Tensor:
    """HSV encoding of a ground-truth RGB batch (no gradient needed)."""
    arr = rgb_batch.detach().numpy().transpose(0, 2, 3, 1)
    hsv = rgb_to_hsv_array(arr)
    return torch.from_numpy(np.ascontiguousarray(hsv.transpose(0, 3, 1, 2)))


class _Trainer:
    def __init__(self, config: TrainConfig, bundle: ModelBundle):
        self.config = config
        self.bundle = bundle
        betas = config.adam_betas
        self.opt_g = torch.optim.Adam(bundle.generator_parameters(),
                                      lr=config.base_lr, betas=betas)
        self.opt_da = torch.optim.Adam(bundle.d_rgb.parameters(),
                                       lr=config.base_lr, betas=betas)
        self.opt_db = torch.optim.Adam(bundle.d_nir.parameters(),
                                       lr=config.base_lr, betas=betas)

    def set_lr(self, lr: float) -> None:
        for opt in (self.opt_g, self.opt_da, self.opt_db):
            for group in opt.param_groups:
                group["lr"] = lr

    def generator_phase(self, batch: Batch):
        """One generator update; returns the loss breakdown and the detached
        fake images the discriminator phase judges."""
        cfg, bundle = self.config, self.bundle
        x, y = batch.nir, batch.rgb
        paired = batch.mode == "paired"

        out = bundle.colorizer(x)
        fake_nir = bundle.gb(y)
        recon_nir = bundle.gb(out.y_rgb)
        recon_rgb = bundle.colorizer(fake_nir).y_rgb

        gan_g = (generator_gan_loss(bundle.d_rgb(out.y_rgb))
                 + generator_gan_loss(bundle.d_nir(fake_nir)))
        cyc = cycle_loss(recon_nir, x, recon_rgb, y)
        if paired:
            pair = pair_loss(out.y_rgb, y, fake_nir, x)
            if cfg.use_hsv_cfem:
                pair = pair + hsv_supervision_loss(out.y_hsv, hsv_target(y))
            edge = edge_loss(out.y_rgb, y, fake_nir, x)
        else:
            pair = torch.zeros((), dtype=x.dtype)
            edge = torch.zeros((), dtype=x.dtype)
        breakdown = total_loss(gan_g, pair, cyc, edge, cfg.weights)

        self.opt_g.zero_grad()
        breakdown.total.backward()
        self.opt_g.step()
        return breakdown.detached(), out.y_rgb.detach(), fake_nir.detach()

    def discriminator_phase(self, batch: Batch, fake_rgb: torch.Tensor,
                            fake_nir: torch.Tensor) -> tuple[float, float]:
        """One update of each discriminator against detached fakes."""
        bundle = self.bundle
        da = discriminator_loss(bundle.d_rgb(batch.rgb),
                                bundle.d_rgb(fake_rgb))
        self.opt_da.zero_grad()
        da.backward()
        self.opt_da.step()

        db = discriminator_loss(bundle.d_nir(batch.nir),
                                bundle.d_nir(fake_nir))
        self.opt_db.zero_grad()
        db.backward()
        self.opt_db.step()
        return float(da.detach()), float(db.detach())

    def step(self, batch: Batch) -> tuple[LossBreakdown, float, float]:
        breakdown, fake_rgb, fake_nir = self.generator_phase(batch)
        da, db = self.discriminator_phase(batch, fake_rgb, fake_nir)
        return breakdown, da, db


def _epoch_spec(spec: AugmentSpec, epoch: int) -> AugmentSpec:
    # vary augmentation across epochs while keeping runs reproducible
    return replace(spec, seed=(spec.seed * 1000003 + epoch) & 0x7FFFFFFF)


def _augmented(dataset: PairDataset, spec: AugmentSpec | None,
               epoch: int) -> PairDataset:
    if spec is None:
        return dataset
    spec_e = _epoch_spec(spec, epoch)
    return PairDataset(
        pairs=[augment(p, spec_e) for p in dataset.pairs],
        nir_only=[augment(p, spec_e) for p in dataset.nir_only],
        rgb_only=[(sid, augment_plane(pl, sid, spec_e))
                  for sid, pl in dataset.rgb_only],
    )


def _interleave(paired: list[Batch], unpaired: list[Batch]) -> list[Batch]:
    mixed = []
    for p, u in zip(paired, unpaired):
        mixed.extend([p, u])
    mixed.extend(paired[len(unpaired):])
    mixed.extend(unpaired[len(paired):])
    return mixed


def train(config: TrainConfig, dataset: PairDataset,
          out_dir: Path | str | None = None) -> TrainResult:
    """Run the full two-stage schedule and return models plus the loss log.

    When out_dir is given, writes the training log (CSV + JSON lines), the
    per-batch schedule log, and a final checkpoint there.
    """
    if not dataset.pairs:
        raise DataError("training requires paired data for stage 1")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    bundle = build_models(config)
    bundle.train_mode(True)
    trainer = _Trainer(config, bundle)
    log = TrainingLog()

    for epoch in range(1, config.total_epochs + 1):
        lr = lr_at_epoch(epoch, config)
        trainer.set_lr(lr)
        epoch_ds = _augmented(dataset, config.augment, epoch)
        paired = epoch_batches(epoch_ds, "paired", config.batch_size, rng)
        if epoch > config.stage1_end:
            unpaired = epoch_batches(epoch_ds, "unpaired", config.batch_size, rng)
            batches = _interleave(paired, unpaired)
        else:
            batches = paired

        sums = np.zeros(5)
        da_sum = db_sum = 0.0
        for step, batch in enumerate(batches):
            try:
                breakdown, da, db = trainer.step(batch)
            except NumericError as exc:
                _dump_failure(out_dir, epoch, step, batch)
                raise NumericError(
                    f"non-finite loss at epoch {epoch} step {step} "
                    f"(nir ids {batch.nir_ids}, rgb ids {batch.rgb_ids}): {exc}"
                ) from exc
            log.batches.append(BatchRecord(
                epoch, step, batch.mode, gan=breakdown.gan,
                pair=breakdown.pair, cyc=breakdown.cyc, edge=breakdown.edge,
                total=breakdown.total))
            sums += [breakdown.gan, breakdown.pair, breakdown.cyc,
                     breakdown.edge, breakdown.total]
            da_sum += da
            db_sum += db
        n = len(batches)
        log.epochs.append(EpochRecord(
            epoch=epoch, lr=lr, gen_gan=sums[0] / n, gen_pair=sums[1] / n,
            gen_cyc=sums[2] / n, gen_edge=sums[3] / n, gen_total=sums[4] / n,
            disc_a=da_sum / n, disc_b=db_sum / n))

    checkpoint_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log.write(out_dir)
        checkpoint_path = out_dir / "checkpoint.pt"
        save_checkpoint(checkpoint_path, bundle, trainer, config,
                        epoch=config.total_epochs, np_rng=rng)
    return TrainResult(bundle, log, config, checkpoint_path)


def _dump_failure(out_dir, epoch, step, batch) -> None:
    if out_dir is None:
        return
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "failure_dump.json", "w") as fh:
        json.dump({"epoch": epoch, "step": step, "mode": batch.mode,
                   "nir_ids": batch.nir_ids, "rgb_ids": batch.rgb_ids}, fh,
                  indent=2)


@dataclass
class Checkpoint:
    """Deserialized checkpoint: parameter groups plus run state."""

    version: int
    epoch: int
    config: TrainConfig
    param_groups: dict[str, dict]
    optimizer_state: dict[str, dict]
    torch_rng: torch.Tensor
    numpy_rng: dict | None

    def restore(self, bundle: ModelBundle) -> None:
        """Load parameters into a bundle, checking group-by-group shapes."""
        modules = bundle.group_modules()
        if set(self.param_groups) != set(modules):
            missing = set(self.param_groups) ^ set(modules)
            raise CheckpointError(
                f"parameter group mismatch between checkpoint and model: "
                f"{sorted(missing)}")
        for name, module in modules.items():
            stored = self.param_groups[name]
            current = module.state_dict()
            for key, tensor in stored.items():
                if key not in current:
                    raise CheckpointError(
                        f"group '{name}': unexpected tensor {key!r}")
                if current[key].shape != tensor.shape:
                    raise CheckpointError(
                        f"group '{name}': shape mismatch for {key!r}: "
                        f"checkpoint {tuple(tensor.shape)} vs model "
                        f"{tuple(current[key].shape)}")
            module.load_state_dict(stored)


def save_checkpoint(path: Path | str, bundle: ModelBundle, trainer=None,
                    config: TrainConfig | None = None, epoch: int = 0,
                    np_rng: np.random.Generator | None = None) -> None:
    """Write a versioned, checksummed checkpoint plus a JSON config sidecar."""
    path = Path(path)
    payload = {
        "epoch": epoch,
        "config": config.to_dict() if config else None,
        "param_groups": {name: module.state_dict()
                         for name, module in bundle.group_modules().items()},
        "optimizer_state": {},
        "torch_rng": torch.get_rng_state(),
        "numpy_rng": np_rng.bit_generator.state if np_rng is not None else None,
    }
    if trainer is not None:
        payload["optimizer_state"] = {
            "g": trainer.opt_g.state_dict(),
            "d_a": trainer.opt_da.state_dict(),
            "d_b": trainer.opt_db.state_dict(),
        }
    buf = io.BytesIO()
    torch.save(payload, buf)
    data = buf.getvalue()
    digest = hashlib.sha256(data).digest()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(digest)
        fh.write(struct.pack("<Q", len(data)))
        fh.write(data)
    sidecar = {"version": CHECKPOINT_VERSION, "epoch": epoch,
               "config": config.to_dict() if config else None}
    with open(path.with_name(path.name + ".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2)


def load_checkpoint(path: Path | str) -> Checkpoint:
    """Read and verify a checkpoint file (magic, version, checksum)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    header = len(CHECKPOINT_MAGIC) + 4 + 32 + 8
    if len(raw) < header or raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {version} != supported {CHECKPOINT_VERSION}")
    digest = raw[8:40]
    (length,) = struct.unpack("<Q", raw[40:48])
    data = raw[48:]
    if len(data) != length or hashlib.sha256(data).digest() != digest:
        raise CheckpointError(f"{path} failed checksum (truncated or corrupt)")
    payload = torch.load(io.BytesIO(data), weights_only=False)
    config = (TrainConfig.from_dict(payload["config"])
              if payload["config"] else None)
    return Checkpoint(
        version=version, epoch=payload["epoch"], config=config,
        param_groups=payload["param_groups"],
        optimizer_state=payload["optimizer_state"],
        torch_rng=payload["torch_rng"], numpy_rng=payload["numpy_rng"])
