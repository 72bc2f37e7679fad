"""Convolutional yield head and final supervised training.

The head is a single 3x3 same-padding convolution over the mask-selected
feature channels; its spatial mean is the per-plot yield prediction. Yields
are standardized to zero mean / unit variance on the training split for SGD
and de-standardized for reporting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import contrastive as ct
from . import tensor as tc
from .errors import DomainError, NumericalError, ShapeMismatchError
from .tensor import Tensor


@dataclass
class HeadParams:
    w: Tensor  # [1, C_sel, 3, 3]
    b: Tensor  # scalar bias
    activation: str = "identity"  # identity | relu
    bias_only: bool = False  # freeze w at zero (constant-predictor probe)

    def parameters(self):
        return [self.b] if self.bias_only else [self.w, self.b]

    def named(self, prefix: str = "head"):
        return {f"{prefix}/w": self.w.data, f"{prefix}/b": self.b.data}


def init_head(c_sel: int, activation: str = "identity", bias_only: bool = False) -> HeadParams:
    if c_sel < 1:
        raise DomainError("yield head needs a non-empty feature selection")
    if activation not in ("identity", "relu"):
        raise DomainError(f"head activation must be identity or relu, got {activation!r}")
    return HeadParams(
        w=tc.param(np.zeros((1, c_sel, 3, 3))),
        b=tc.param(np.zeros(())),
        activation=activation,
        bias_only=bias_only,
    )


def predict_yield(f_opt: Tensor, p: HeadParams):
    """Yield map sigma(W * F + b) and its spatial mean as the scalar prediction."""
    if f_opt.data.ndim != 3 or f_opt.data.shape[0] < 1:
        raise DomainError(f"expected non-empty [C_sel,H,W] features, got {f_opt.data.shape}")
    ymap = tc.activation(tc.conv2d(f_opt, p.w, padding=1) + p.b, p.activation)
    return ymap, ymap.mean()


def mse_loss(y: Tensor, y_pred: Tensor) -> Tensor:
    if y.data.shape != y_pred.data.shape:
        raise ShapeMismatchError(
            f"mse_loss length mismatch: {y.data.shape} vs {y_pred.data.shape}"
        )
    if y.data.size < 1:
        raise ShapeMismatchError("mse_loss needs at least one element")
    diff = y - y_pred
    return (diff * diff).mean()


@dataclass
class TrainResult:
    head: HeadParams
    lstm: object
    ssa: object
    y_mean: float
    y_std: float
    curve: list  # (epoch, train_mse, val_mse) in standardized units; epoch 0 = init
    best_epoch: int


def train_final(frames_by_sample, lstm_p, ssa_p, mask, y, train_idx, val_idx, rng,
                epochs: int = 80, lr: float = 0.05, batch_size: int = 8,
                patience: int | None = 5, activation: str = "identity",
                bias_only: bool = False, finetune_encoder: bool = False,
                head: HeadParams | None = None) -> TrainResult:
    """SGD on the prediction MSE over the train split.

    The head always trains; the encoder joins in when ``finetune_encoder``.
    Early stopping restores the parameters of the best validation epoch;
    ``patience=None`` disables it.
    """
    mask = np.asarray(mask, dtype=bool)
    sel = np.flatnonzero(mask)
    if sel.size == 0:
        raise DomainError("feature mask selects no channels")
    y = np.asarray(y, dtype=np.float64)
    y_mean = float(np.mean(y[train_idx]))
    y_std = float(np.std(y[train_idx]))
    if y_std == 0.0:
        y_std = 1.0
    y_star = (y - y_mean) / y_std

    if head is None:
        head = init_head(sel.size, activation=activation, bias_only=bias_only)
    params = list(head.parameters())
    if finetune_encoder:
        params += lstm_p.parameters() + ssa_p.parameters()

    cache = {}

    def features_of(i):
        if finetune_encoder:
            fused = ct.encode_features(frames_by_sample[i], lstm_p, ssa_p)
            return tc.take_channels(fused, sel)
        if i not in cache:
            fused = ct.encode_features(frames_by_sample[i], lstm_p, ssa_p)
            cache[i] = fused.data[sel]
        return Tensor(cache[i])

    def predict_standardized(i):
        _, scalar = predict_yield(features_of(i), head)
        return scalar

    def split_mse(idx):
        preds = np.array([predict_standardized(i).item() for i in idx])
        return float(np.mean((preds - y_star[list(idx)]) ** 2))

    def snapshot():
        return [p.data.copy() for p in params]

    def restore(snap):
        for p, s in zip(params, snap):
            p.data[...] = s

    train_list = list(train_idx)
    val_list = list(val_idx)
    curve = [(0, split_mse(train_list), split_mse(val_list))]
    best_val = curve[0][2]
    best_snap = snapshot()
    best_epoch = 0
    stale = 0
    for epoch in range(1, epochs + 1):
        order = [train_list[k] for k in rng.permutation(len(train_list))]
        for start in range(0, len(order), batch_size):
            chunk = order[start:start + batch_size]
            for p in params:
                p.zero_grad()
            preds = [predict_standardized(i) for i in chunk]
            pred_vec = tc.concat([tc.reshape(s, (1,)) for s in preds], axis=0)
            loss = mse_loss(Tensor(y_star[chunk]), pred_vec)
            if not np.isfinite(loss.data):
                raise NumericalError("final training diverged (non-finite loss)")
            loss.backward()
            for p in params:
                p.data -= lr * p.grad
        tr, va = split_mse(train_list), split_mse(val_list)
        curve.append((epoch, tr, va))
        if va < best_val - 1e-12:
            best_val, best_snap, best_epoch, stale = va, snapshot(), epoch, 0
        else:
            stale += 1
            if patience is not None and stale >= patience:
                break
    if patience is not None:  # early stopping restores the best validation epoch
        restore(best_snap)
    return TrainResult(head=head, lstm=lstm_p, ssa=ssa_p, y_mean=y_mean, y_std=y_std,
                       curve=curve, best_epoch=best_epoch)
