"""Training loops for the parser and the restoration GAN.

Both trainers derive every random choice (weight init, batch indices,
per-sample degradations) from the run seed, log per-step losses to CSV,
and checkpoint their full state so a resumed run continues the exact
loss sequence of an uninterrupted one.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import torch
from torch import nn

from .checkpoint import (
    Checkpoint,
    load_checkpoint,
    load_optimizer_tensors,
    load_state_dict_tensors,
    optimizer_tensors,
    save_checkpoint,
    state_dict_tensors,
)
from .config import RunConfig
from .data import PairedImageFolder, batch_indices, degrade_batch
from .discriminator import MultiScaleDiscriminator
from .generator import ProgressiveGenerator
from .imgproc import stack_to_tensor, to_tensor
from .losses import (
    RandomFeatureExtractor,
    Vgg19Extractor,
    gan_d_loss,
    gan_g_loss,
    reconstruction_loss,
    semantic_style_loss,
    total_g_loss,
)
from .parsing import ParsingNet, argmax_labels, validate_labels

FPN_CSV_FIELDS = ("step", "l_parse", "l_pix", "total")
GAN_CSV_FIELDS = ("step", "l_ss", "l_rec", "l_g", "l_d", "total")


class CsvLogger:
    """Append-mode CSV writer that emits the header once per file."""

    def __init__(self, path: str | Path, fields: tuple[str, ...]):
        self.path = Path(path)
        self.fields = fields
        self._fh = None

    def log(self, row: dict) -> None:
        if self._fh is None:
            new = not self.path.exists() or self.path.stat().st_size == 0
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "a", newline="")
            self._writer = csv.DictWriter(self._fh, fieldnames=self.fields)
            if new:
                self._writer.writeheader()
        self._writer.writerow({k: f"{row[k]:.8f}" if isinstance(row[k], float) else row[k] for k in self.fields})
        self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def _labels_tensor(maps: list[np.ndarray], device) -> torch.Tensor:
    return torch.stack([torch.from_numpy(m.astype(np.int64)) for m in maps]).to(device)


class FpnTrainer:
    """Multi-task parser training: cross-entropy plus image regression."""

    def __init__(self, config: RunConfig, dataset: PairedImageFolder, device: str = "cpu"):
        config.validate()
        if dataset.label_dir is None:
            raise ValueError("parser training needs a dataset with label maps")
        self.config = config
        self.dataset = dataset
        self.device = torch.device(device)
        torch.manual_seed(config.train.seed)
        self.model = ParsingNet(config.fpn).to(self.device)
        self.opt = torch.optim.Adam(
            self.model.parameters(), lr=config.train.lr_fpn, betas=(config.train.beta1_fpn, config.train.beta2)
        )
        self.step_count = 0

    def _batch(self, step: int):
        tc = self.config.train
        idx = batch_indices(len(self.dataset), tc.batch_fpn, tc.seed, step)
        hq = [self.dataset.hq(int(i)) for i in idx]
        labels = [self.dataset.labels(int(i)) for i in idx]
        lq = degrade_batch(hq, tc.seed, step, tc.resolution)
        return (
            stack_to_tensor(lq).to(self.device),
            stack_to_tensor(hq).to(self.device),
            _labels_tensor(labels, self.device),
        )

    def train_step(self) -> dict:
        self.model.train()
        lq, hq, labels = self._batch(self.step_count)
        validate_labels(labels, self.config.fpn.num_classes)
        logits, restored = self.model(lq)
        l_parse = torch.nn.functional.cross_entropy(logits, labels)
        l_pix = torch.nn.functional.mse_loss(restored, hq)
        loss = l_parse + l_pix
        self.opt.zero_grad(set_to_none=True)
        loss.backward()
        self.opt.step()
        self.step_count += 1
        return {
            "step": self.step_count,
            "l_parse": float(l_parse.detach()),
            "l_pix": float(l_pix.detach()),
            "total": float(loss.detach()),
        }

    def train(self, steps: int, log_path: str | Path | None = None, ckpt_path: str | Path | None = None) -> list[dict]:
        logger = CsvLogger(log_path, FPN_CSV_FIELDS) if log_path else None
        every = self.config.train.ckpt_every
        history = []
        try:
            for _ in range(steps):
                row = self.train_step()
                history.append(row)
                if logger and self.step_count % self.config.train.log_every == 0:
                    logger.log(row)
                if ckpt_path and every and self.step_count % every == 0:
                    self.save(ckpt_path)
            if ckpt_path:
                self.save(ckpt_path)
        finally:
            if logger:
                logger.close()
        return history

    def save(self, path: str | Path) -> None:
        tensors = state_dict_tensors(self.model, "model")
        opt_tensors, opt_meta = optimizer_tensors(self.opt, "opt")
        tensors.update(opt_tensors)
        save_checkpoint(
            path,
            Checkpoint(
                kind="fpn",
                config=self.config.to_dict(),
                step=self.step_count,
                tensors=tensors,
                extra={"opt": opt_meta},
            ),
        )

    @classmethod
    def resume(cls, path: str | Path, dataset: PairedImageFolder, device: str = "cpu") -> "FpnTrainer":
        ckpt = load_checkpoint(path)
        if ckpt.kind != "fpn":
            raise ValueError(f"expected an fpn checkpoint, got kind {ckpt.kind!r}")
        config = RunConfig.from_dict(ckpt.config)
        trainer = cls(config, dataset, device=device)
        load_state_dict_tensors(trainer.model, ckpt.subset("model"))
        load_optimizer_tensors(trainer.opt, ckpt.subset("opt"), ckpt.extra["opt"])
        trainer.step_count = ckpt.step
        return trainer


def load_parser(path: str | Path, device: str = "cpu") -> tuple[ParsingNet, RunConfig]:
    """Rebuild a trained parser from its checkpoint."""
    ckpt = load_checkpoint(path)
    if ckpt.kind != "fpn":
        raise ValueError(f"expected an fpn checkpoint, got kind {ckpt.kind!r}")
    config = RunConfig.from_dict(ckpt.config)
    model = ParsingNet(config.fpn).to(device)
    load_state_dict_tensors(model, ckpt.subset("model"))
    model.eval()
    return model, config


class RestorationTrainer:
    """Adversarial restoration training; one D update then one G update per step."""

    def __init__(
        self,
        config: RunConfig,
        dataset: PairedImageFolder,
        parser: Optional[ParsingNet] = None,
        device: str = "cpu",
        on_event: Optional[Callable[[str, int], None]] = None,
    ):
        config.validate()
        tc = config.train
        if tc.label_source == "gt" and dataset.label_dir is None:
            raise ValueError("label_source 'gt' needs a dataset with label maps")
        if tc.label_source == "parser" and parser is None:
            raise ValueError("label_source 'parser' needs a trained parser")
        self.config = config
        self.dataset = dataset
        self.device = torch.device(device)
        self.on_event = on_event
        torch.manual_seed(tc.seed)
        self.gen = ProgressiveGenerator(config.gen).to(self.device)
        self.disc = MultiScaleDiscriminator(base_channels=tc.disc_channels).to(self.device)
        self.parser = parser.to(self.device).eval() if parser is not None else None
        if tc.perceptual == "vgg19":
            self.extractor = Vgg19Extractor().to(self.device)
        else:
            self.extractor = RandomFeatureExtractor(seed=tc.seed).to(self.device)
        self.extractor.eval()
        self.opt_g = torch.optim.Adam(self.gen.parameters(), lr=tc.lr_g, betas=(tc.beta1_gan, tc.beta2))
        self.opt_d = torch.optim.Adam(self.disc.parameters(), lr=tc.lr_d, betas=(tc.beta1_gan, tc.beta2))
        self.step_count = 0

    def _batch(self, step: int):
        tc = self.config.train
        idx = batch_indices(len(self.dataset), tc.batch_gan, tc.seed, step)
        hq = [self.dataset.hq(int(i)) for i in idx]
        lq = degrade_batch(hq, tc.seed, step, tc.resolution)
        lq_t = stack_to_tensor(lq).to(self.device)
        hq_t = stack_to_tensor(hq).to(self.device)
        if tc.label_source == "gt":
            labels = _labels_tensor([self.dataset.labels(int(i)) for i in idx], self.device)
        else:
            with torch.no_grad():
                logits, _ = self.parser(lq_t)
            labels = argmax_labels(logits)
        return lq_t, hq_t, labels

    def train_step(self) -> dict:
        self.gen.train()
        self.disc.train()
        lq, hq, labels = self._batch(self.step_count)
        fake = self.gen(lq, labels)

        # discriminator first: hinge loss on real and detached fake
        if self.on_event:
            self.on_event("d", self.step_count)
        real_out = self.disc(hq)
        fake_out = self.disc(fake.detach())
        l_d = gan_d_loss([s for s, _ in real_out], [s for s, _ in fake_out])
        self.opt_d.zero_grad(set_to_none=True)
        l_d.backward()
        self.opt_d.step()

        # generator second, against the just-updated discriminator
        if self.on_event:
            self.on_event("g", self.step_count)
        fake_out = self.disc(fake)
        with torch.no_grad():
            real_out = self.disc(hq)
        l_ss = semantic_style_loss(fake, hq, labels, self.extractor)
        l_rec = reconstruction_loss(fake, hq, [f for _, f in fake_out], [f for _, f in real_out])
        l_g = gan_g_loss([s for s, _ in fake_out])
        loss = total_g_loss(l_ss, l_rec, l_g, self.config.weights)
        self.opt_g.zero_grad(set_to_none=True)
        loss.backward()
        self.opt_g.step()

        self.step_count += 1
        return {
            "step": self.step_count,
            "l_ss": float(l_ss.detach()),
            "l_rec": float(l_rec.detach()),
            "l_g": float(l_g.detach()),
            "l_d": float(l_d.detach()),
            "total": float(loss.detach()),
        }

    def train(self, steps: int, log_path: str | Path | None = None, ckpt_path: str | Path | None = None) -> list[dict]:
        logger = CsvLogger(log_path, GAN_CSV_FIELDS) if log_path else None
        every = self.config.train.ckpt_every
        history = []
        try:
            for _ in range(steps):
                row = self.train_step()
                history.append(row)
                if logger and self.step_count % self.config.train.log_every == 0:
                    logger.log(row)
                if ckpt_path and every and self.step_count % every == 0:
                    self.save(ckpt_path)
            if ckpt_path:
                self.save(ckpt_path)
        finally:
            if logger:
                logger.close()
        return history

    def save(self, path: str | Path) -> None:
        tensors = state_dict_tensors(self.gen, "gen")
        tensors.update(state_dict_tensors(self.disc, "disc"))
        g_tensors, g_meta = optimizer_tensors(self.opt_g, "opt_g")
        d_tensors, d_meta = optimizer_tensors(self.opt_d, "opt_d")
        tensors.update(g_tensors)
        tensors.update(d_tensors)
        save_checkpoint(
            path,
            Checkpoint(
                kind="restorer",
                config=self.config.to_dict(),
                step=self.step_count,
                tensors=tensors,
                extra={"opt_g": g_meta, "opt_d": d_meta},
            ),
        )

    @classmethod
    def resume(
        cls,
        path: str | Path,
        dataset: PairedImageFolder,
        parser: Optional[ParsingNet] = None,
        device: str = "cpu",
        on_event: Optional[Callable[[str, int], None]] = None,
    ) -> "RestorationTrainer":
        ckpt = load_checkpoint(path)
        if ckpt.kind != "restorer":
            raise ValueError(f"expected a restorer checkpoint, got kind {ckpt.kind!r}")
        config = RunConfig.from_dict(ckpt.config)
        trainer = cls(config, dataset, parser=parser, device=device, on_event=on_event)
        load_state_dict_tensors(trainer.gen, ckpt.subset("gen"))
        load_state_dict_tensors(trainer.disc, ckpt.subset("disc"))
        load_optimizer_tensors(trainer.opt_g, ckpt.subset("opt_g"), ckpt.extra["opt_g"])
        load_optimizer_tensors(trainer.opt_d, ckpt.subset("opt_d"), ckpt.extra["opt_d"])
        trainer.step_count = ckpt.step
        return trainer


def load_generator(path: str | Path, device: str = "cpu") -> tuple[ProgressiveGenerator, RunConfig]:
    """Rebuild a trained generator from its checkpoint; discriminators stay behind."""
    ckpt = load_checkpoint(path)
    if ckpt.kind != "restorer":
        raise ValueError(f"expected a restorer checkpoint, got kind {ckpt.kind!r}")
    config = RunConfig.from_dict(ckpt.config)
    gen = ProgressiveGenerator(config.gen).to(device)
    load_state_dict_tensors(gen, ckpt.subset("gen"))
    gen.eval()
    return gen, config


def restore_image(
    parser: ParsingNet,
    gen: ProgressiveGenerator,
    lq: np.ndarray,
    zero_levels=(),
) -> tuple[np.ndarray, np.ndarray]:
    """Parse then restore one uint8 image of any size.

    Returns the restored uint8 image and the predicted label map at the
    model resolution.
    """
    from .imgproc import from_tensor, resize_image

    res = gen.config.in_resolution
    if parser.config.in_resolution != res:
        raise ValueError(
            f"parser resolution {parser.config.in_resolution} != generator resolution {res}"
        )
    lq = resize_image(lq, res, "bicubic")
    parser.eval()
    gen.eval()
    with torch.no_grad():
        batch = to_tensor(lq).unsqueeze(0)
        logits, _ = parser(batch)
        labels = argmax_labels(logits)
        out = gen(batch, labels, zero_levels=zero_levels)
    return from_tensor(out[0]), labels[0].cpu().numpy().astype(np.uint8)
