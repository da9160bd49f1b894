"""Training loops for the two fitters, with logs and early stopping.

Both loops are single-threaded and fully seeded: a fixed seed reproduces the
parameter trajectory and the loss log exactly. The learning rate decays by
``lr_decay_gamma`` every ``lr_decay_every`` epochs. Early stopping tracks a
validation loss on a held-out split of the training subjects (U-Net) or of
the voxel vectors (MLP) and restores the best parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .. import nn
from .architectures import MlpConfig, UNetConfig, build_mlp, build_unet
from .sampling import AugmentConfig, PatchSampler


@dataclass(frozen=True)
class TrainConfig:
    """Loop hyperparameters (desk-scale defaults; paper profile overrides)."""

    epochs: int = 150
    steps_per_epoch: int = 12
    batch_size: int = 4
    lr: float = 1e-3
    lr_decay_gamma: float = 0.9
    lr_decay_every: int = 1
    weight_decay: float = 0.0
    early_stop_patience: int = 8
    val_fraction: float = 0.1
    n_val_patches: int = 16
    input_scale: float = 1e-3
    augment: AugmentConfig | None = AugmentConfig()


def _snapshot(net):
    params = [p.data.copy() for p in net.params()]
    buffers = [
        (layer, name, getattr(layer, name).copy())
        for layer, _ in net.nodes
        for name, _ in layer.buffers()
    ]
    return params, buffers


def _restore(net, snap):
    params, buffers = snap
    for p, saved in zip(net.params(), params):
        p.data = saved.copy()
    for layer, name, saved in buffers:
        setattr(layer, name, saved.copy())


def _split_validation(items, val_fraction, rng):
    if val_fraction <= 0 or len(items) < 2:
        return list(items), []
    order = rng.permutation(len(items))
    n_val = max(1, int(round(val_fraction * len(items))))
    val_idx = set(order[:n_val].tolist())
    train = [items[i] for i in range(len(items)) if i not in val_idx]
    val = [items[i] for i in range(len(items)) if i in val_idx]
    return train, val


def train_unet(subjects, cfg: UNetConfig = UNetConfig(), train_cfg: TrainConfig = TrainConfig(), seed=0):
    """Patch-based U-Net training; returns (network, per-epoch log rows)."""
    if not subjects:
        raise ValueError("empty dataset")
    root = np.random.SeedSequence([int(seed), 303])
    split_seq, sampler_seq, val_seq, init_seq = root.spawn(4)
    split_rng = np.random.default_rng(split_seq)

    train_subjects, val_subjects = _split_validation(subjects, train_cfg.val_fraction, split_rng)
    if not train_subjects:
        train_subjects, val_subjects = list(subjects), []

    sampler = PatchSampler(
        train_subjects,
        patch=cfg.patch,
        augment=train_cfg.augment,
        loss_mask_mode=cfg.loss_mask_mode,
        seed=sampler_seq,
    )
    val_batch = None
    if val_subjects:
        val_sampler = PatchSampler(
            val_subjects,
            patch=cfg.patch,
            augment=None,
            loss_mask_mode=cfg.loss_mask_mode,
            seed=val_seq,
        )
        val_batch = val_sampler.sample_batch(train_cfg.n_val_patches)

    net = build_unet(cfg, seed=int(np.random.default_rng(init_seq).integers(2**31)))
    opt = nn.Adam(
        net.params(),
        lr=train_cfg.lr,
        weight_decay=train_cfg.weight_decay,
        decay_gamma=train_cfg.lr_decay_gamma,
    )
    scale = train_cfg.input_scale

    log = []
    best = (np.inf, None, -1)  # val loss, snapshot, epoch
    since_best = 0
    for epoch in range(train_cfg.epochs):
        losses = []
        for _ in range(train_cfg.steps_per_epoch):
            x, target, mask = sampler.sample_batch(train_cfg.batch_size)
            if mask.sum() == 0:
                continue  # nothing supervisable in this batch
            pred = net.forward(x * scale, train=True)
            losses.append(nn.l1_loss(pred, target, mask))
            net.backward(nn.l1_loss_grad(pred, target, mask))
            opt.step()
        train_loss = float(np.mean(losses)) if losses else float("nan")

        if val_batch is not None and val_batch[2].sum() > 0:
            vx, vt, vm = val_batch
            val_loss = nn.l1_loss(net.forward(vx * scale, train=False), vt, vm)
        else:
            val_loss = train_loss
        log.append(
            {"epoch": epoch + 1, "lr": opt.lr, "train_loss": train_loss, "val_loss": val_loss}
        )

        if val_loss < best[0]:
            best = (val_loss, _snapshot(net), epoch)
            since_best = 0
        else:
            since_best += 1
        if train_cfg.early_stop_patience and since_best >= train_cfg.early_stop_patience:
            break
        if (epoch + 1) % train_cfg.lr_decay_every == 0:
            opt.decay_lr()

    if best[1] is not None:
        _restore(net, best[1])
    return net, log


def _subject_vectors(subject, input_scale):
    mask = subject.roi.astype(bool) & subject.target_valid.astype(bool)
    if not subject.roi.any():
        raise ValueError(f"empty ROI for subject {subject.subject_id}")
    mask_t = mask.transpose(2, 1, 0)
    x = np.stack(
        [subject.inputs[c].transpose(2, 1, 0)[mask_t] for c in range(2)], axis=1
    )
    y = subject.target.transpose(2, 1, 0)[mask_t]
    return x * input_scale, y


def train_mlp(subjects, cfg: MlpConfig = MlpConfig(), train_cfg: TrainConfig = TrainConfig(), seed=0):
    """Voxel-vector MLP training with RMSProp; returns (network, log rows)."""
    if not subjects:
        raise ValueError("empty dataset")
    xs, ys = [], []
    for s in subjects:
        x, y = _subject_vectors(s, train_cfg.input_scale)
        xs.append(x)
        ys.append(y)
    x_all = np.concatenate(xs, axis=0)
    y_all = np.concatenate(ys, axis=0)

    root = np.random.SeedSequence([int(seed), 404])
    split_seq, shuffle_seq, init_seq = root.spawn(3)
    order = np.random.default_rng(split_seq).permutation(x_all.shape[0])
    n_val = int(round(train_cfg.val_fraction * x_all.shape[0]))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if train_idx.size == 0:
        train_idx, val_idx = order, order[:0]
    x_train, y_train = x_all[train_idx], y_all[train_idx]
    x_val, y_val = x_all[val_idx], y_all[val_idx]

    net = build_mlp(cfg, seed=int(np.random.default_rng(init_seq).integers(2**31)))
    opt = nn.RMSProp(
        net.params(),
        lr=train_cfg.lr,
        weight_decay=train_cfg.weight_decay,
        decay_gamma=train_cfg.lr_decay_gamma,
    )
    shuffle_rng = np.random.default_rng(shuffle_seq)

    log = []
    best = (np.inf, None, -1)
    since_best = 0
    n = x_train.shape[0]
    for epoch in range(train_cfg.epochs):
        perm = shuffle_rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            pred = net.forward(x_train[idx], train=True)
            target = y_train[idx][:, None]
            losses.append(nn.l1_loss(pred, target))
            net.backward(nn.l1_loss_grad(pred, target))
            opt.step()
        train_loss = float(np.mean(losses))
        if x_val.size:
            val_loss = nn.l1_loss(net.forward(x_val, train=False), y_val[:, None])
        else:
            val_loss = train_loss
        log.append(
            {"epoch": epoch + 1, "lr": opt.lr, "train_loss": train_loss, "val_loss": val_loss}
        )
        if val_loss < best[0]:
            best = (val_loss, _snapshot(net), epoch)
            since_best = 0
        else:
            since_best += 1
        if train_cfg.early_stop_patience and since_best >= train_cfg.early_stop_patience:
            break
        if (epoch + 1) % train_cfg.lr_decay_every == 0:
            opt.decay_lr()

    if best[1] is not None:
        _restore(net, best[1])
    return net, log


def paper_profile(train_cfg: TrainConfig = TrainConfig()) -> TrainConfig:
    """The full-scale schedule: 1000 epochs, LR decayed every epoch, no early stop."""
    return replace(train_cfg, epochs=1000, lr_decay_every=1, early_stop_patience=0)
