"""Contrastive pre-training of the ConvLSTM + attention encoder.

Each training sample yields two stochastically augmented copies of its frame
sequence. Both are embedded (recurrent encoding, attention fusion at the
final step, global pooling, linear projection) and the loss pulls the two
views of one sample together while pushing apart the second views of every
other sample in the batch. The positive term appears in the denominator as
well, so the per-anchor loss under uniform similarities is exactly log(n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import attention as at
from . import convlstm as cl
from . import diffusion as df
from . import tensor as tc
from .errors import DomainError, NumericalError, ShapeMismatchError
from .tensor import Tensor


@dataclass
class ContrastiveBatch:
    """Positive pairs (two views per sample) plus provenance for negatives.

    A positive pair shares its (plot_id, season_tag) tag; every other second
    view in the batch is a negative for an anchor.
    """

    pairs: list  # [(v1, v2)] embedding Tensors
    tags: list  # [(plot_id, season_tag)]


def embed_sequence(frames, lstm_p: cl.ConvLstmParams, ssa_p: at.SsaParams,
                   proj: Tensor) -> Tensor:
    """Embed a [C,H,W] frame sequence into a fixed-length vector."""
    frames = [f if isinstance(f, Tensor) else Tensor(f) for f in frames]
    a = ssa_p.history
    if len(frames) < a + 1:
        raise ShapeMismatchError(
            f"need at least history+1 = {a + 1} frames, got {len(frames)}"
        )
    fused = encode_features(frames, lstm_p, ssa_p)
    return proj @ tc.global_avg_pool(fused)


def encode_features(frames, lstm_p: cl.ConvLstmParams, ssa_p: at.SsaParams) -> Tensor:
    """Fused feature map at the final step: the channel-selectable representation."""
    frames = [f if isinstance(f, Tensor) else Tensor(f) for f in frames]
    _, h, w = frames[0].data.shape
    states = cl.convlstm_sequence(frames, lstm_p, cl.zero_state(lstm_p.hidden_channels, h, w))
    a = ssa_p.history
    hist = [states[t].h for t in range(len(states) - 1 - a, len(states) - 1)]
    return at.ssa_forward(states[-1].h, hist, ssa_p)


def contrastive_loss(batch: ContrastiveBatch, tau: float) -> Tensor:
    """Mean over anchors of -log( e^{s_ii/tau} / sum_j e^{s_ij/tau} )."""
    if tau <= 0:
        raise DomainError(f"temperature must be positive, got {tau}")
    n = len(batch.pairs)
    if n < 2:
        raise DomainError("need at least one negative per anchor (batch of >= 2 pairs)")
    total = None
    inv_tau = Tensor(1.0 / tau)
    for i, (v1, _) in enumerate(batch.pairs):
        exps = []
        pos = None
        for j, (_, v2) in enumerate(batch.pairs):
            e = tc.exp(tc.cosine_similarity(v1, v2) * inv_tau)
            exps.append(e)
            if j == i:
                pos = e
        denom = exps[0]
        for e in exps[1:]:
            denom = denom + e
        term = -tc.log(pos / denom)
        total = term if total is None else total + term
    return total / Tensor(float(n))


@dataclass
class PretrainResult:
    lstm: cl.ConvLstmParams
    ssa: at.SsaParams
    projection: Tensor
    loss_history: list  # entry 0 is the pre-update evaluation
    stats: dict


def _augment_views(frames_tchw: np.ndarray, den, sched, depth: int, rng, sigma_scale: float):
    v1, v2 = [], []
    for t in range(frames_tchw.shape[0]):
        a, b = df.augment_pair(frames_tchw[t], den, sched, depth, rng, sigma_scale)
        v1.append(a)
        v2.append(b)
    return v1, v2


def pretrain_encoder(frames_by_sample, tags, train_idx, val_idx, den, sched,
                     seed_rng, channels: int, epochs: int = 20, lr: float = 0.01,
                     batch_size: int = 8, tau: float = 0.5, embed_dim: int = 16,
                     hidden_channels: int = 8, kernel: int = 3, depth: int = 2,
                     sigma_scale: float = 0.1, se_reduction: int = 2,
                     shuffle_groups: int = 2, experts: int = 2, history: int = 2,
                     attention_mode: str = "senet_shuffle",
                     conv_mode: str = "conv_condconv") -> PretrainResult:
    """SGD on the contrastive objective; returns params, history, held-out stats.

    ``frames_by_sample[i]`` is a [T,C,H,W] array (already preprocessed).
    Epoch 0 of the history is measured before any parameter update.
    """
    t_steps, _, h, w = frames_by_sample[train_idx[0]].shape
    lstm_p = cl.init_convlstm_params(channels, hidden_channels, h, w, kernel, seed_rng)
    feat_channels = 2 * hidden_channels
    ssa_p = at.init_ssa_params(
        hidden_channels, seed_rng, reduction=se_reduction, groups=shuffle_groups,
        experts=experts, history=history, k=kernel,
        attention_mode=attention_mode, conv_mode=conv_mode,
    )
    proj = tc.param(seed_rng.uniform(-1.0, 1.0, size=(embed_dim, feat_channels))
                    / math.sqrt(feat_channels))
    params = lstm_p.parameters() + ssa_p.parameters() + [proj]

    def batch_loss(idx_batch, rng):
        pairs, tag_list = [], []
        for i in idx_batch:
            v1_frames, v2_frames = _augment_views(
                frames_by_sample[i], den, sched, depth, rng, sigma_scale
            )
            v1 = embed_sequence(v1_frames, lstm_p, ssa_p, proj)
            v2 = embed_sequence(v2_frames, lstm_p, ssa_p, proj)
            pairs.append((v1, v2))
            tag_list.append(tags[i])
        return contrastive_loss(ContrastiveBatch(pairs, tag_list), tau)

    def epoch_batches(rng):
        order = [train_idx[k] for k in rng.permutation(len(train_idx))]
        for start in range(0, len(order), batch_size):
            chunk = order[start:start + batch_size]
            if len(chunk) >= 2:
                yield chunk

    history_losses = []
    eval_rng = np.random.default_rng(seed_rng.integers(2**63))
    losses = [batch_loss(b, eval_rng).item() for b in epoch_batches(eval_rng)]
    history_losses.append(float(np.mean(losses)))

    for _ in range(epochs):
        epoch_rng = np.random.default_rng(seed_rng.integers(2**63))
        epoch_losses = []
        for batch in epoch_batches(epoch_rng):
            for p in params:
                p.zero_grad()
            loss = batch_loss(batch, epoch_rng)
            if not np.isfinite(loss.data):
                raise NumericalError("contrastive pre-training diverged (non-finite loss)")
            loss.backward()
            for p in params:
                p.data -= lr * p.grad
            epoch_losses.append(loss.item())
        history_losses.append(float(np.mean(epoch_losses)))

    stats = {
        "epoch0_loss": history_losses[0],
        "uniform_loss": math.log(batch_size),
        "final_loss": history_losses[-1],
    }
    if val_idx:
        holdout_rng = np.random.default_rng(seed_rng.integers(2**63))
        pos, neg = holdout_similarities(
            frames_by_sample, val_idx, lstm_p, ssa_p, proj, den, sched, depth,
            holdout_rng, sigma_scale,
        )
        stats["holdout_pos_sim"] = pos
        stats["holdout_neg_sim"] = neg
        stats["holdout_separation"] = pos - neg
    return PretrainResult(lstm=lstm_p, ssa=ssa_p, projection=proj,
                          loss_history=history_losses, stats=stats)


def holdout_similarities(frames_by_sample, idx, lstm_p, ssa_p, proj, den, sched,
                         depth, rng, sigma_scale: float = 0.1):
    """Mean positive-pair and negative-pair cosine similarity on held-out samples."""
    v1s, v2s = [], []
    for i in idx:
        f1, f2 = _augment_views(frames_by_sample[i], den, sched, depth, rng, sigma_scale)
        v1s.append(embed_sequence(f1, lstm_p, ssa_p, proj))
        v2s.append(embed_sequence(f2, lstm_p, ssa_p, proj))
    pos, neg = [], []
    for i, v1 in enumerate(v1s):
        for j, v2 in enumerate(v2s):
            sim = tc.cosine_similarity(v1, v2).item()
            (pos if i == j else neg).append(sim)
    return float(np.mean(pos)), float(np.mean(neg)) if neg else 0.0
