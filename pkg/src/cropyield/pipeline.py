"""Stage orchestration and run-directory management.

A run directory is the unit of reproducibility: it receives a verbatim
config snapshot, per-stage artifacts, and the final evaluation report, and
never writes outside itself. Stages run in the fixed order

    pretrain -> select -> train -> evaluate

A full invocation executes all four. Invoking a single stage resumes from
the artifacts earlier stages left behind; a missing upstream artifact is an
explicit error rather than a silent recompute, so resumed runs stay
attributable to their snapshots.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import attention as at
from . import contrastive as ct
from . import convlstm as cl
from . import diffusion as df
from . import eo
from . import evalmetrics as em
from . import predictor as pr
from . import synthdata as sd
from . import tensor as tc
from .config import RunConfig, config_text
from .errors import DomainError, StagePrerequisiteError
from .fileio import load_checkpoint, rng_for, save_checkpoint
from .tensor import Tensor

STAGES = ("pretrain", "select", "train", "evaluate")

_ARTIFACTS = {
    "pretrain": ("pretrain.ckpt", "pretrain_loss.txt", "pretrain_stats.kv"),
    "select": ("mask.txt", "eo_history.txt"),
    "train": ("model.ckpt", "train_curve.txt"),
    "evaluate": ("report.txt", "report.kv"),
}


def stage_artifacts(run_dir: Path, stage: str):
    return [Path(run_dir) / name for name in _ARTIFACTS[stage]]


def _require_stage(run_dir: Path, stage: str):
    missing = [p.name for p in stage_artifacts(run_dir, stage) if not p.exists()]
    if missing:
        raise StagePrerequisiteError(
            f"stage prerequisite missing: {stage!r} artifacts {missing} not found in {run_dir}"
        )


def prepare_frames(ds: sd.Dataset, cfg: RunConfig):
    """Preprocess and reorder each sample cube to [T, C, H, W]."""
    frames = []
    for s in ds.samples:
        x = sd.enhance_sample(s.x) if cfg.preprocess == "laplacian" else s.x
        frames.append(np.ascontiguousarray(x.transpose(0, 3, 1, 2)))
    return frames


def _load_split_dataset(data_path, cfg: RunConfig) -> sd.Dataset:
    ds = sd.load_dataset(data_path)
    return sd.split_dataset(ds, cfg.seed)


# -- checkpoint (de)serialization -------------------------------------------------


def _restore_lstm(named: dict, prefix: str = "convlstm") -> cl.ConvLstmParams:
    kwargs = {}
    for field in cl.ConvLstmParams.__dataclass_fields__:
        kwargs[field] = tc.param(named[f"{prefix}/{field}"])
    return cl.ConvLstmParams(**kwargs)


def _restore_ssa(named: dict, cfg: RunConfig, prefix: str = "ssa") -> at.SsaParams:
    experts = []
    i = 0
    while f"{prefix}/expert_{i}" in named:
        experts.append(tc.param(named[f"{prefix}/expert_{i}"]))
        i += 1
    return at.SsaParams(
        se=at.SeParams(w1=tc.param(named[f"{prefix}/se_w1"]),
                       w2=tc.param(named[f"{prefix}/se_w2"])),
        groups=cfg.shuffle_groups,
        w_temporal=tc.param(named[f"{prefix}/w_temporal"]),
        conv_kernel=tc.param(named[f"{prefix}/conv_kernel"]),
        conv_bias=tc.param(named[f"{prefix}/conv_bias"]),
        experts=experts,
        routing=tc.param(named[f"{prefix}/routing"]),
        attention_mode=cfg.attention_mode,
        conv_mode=cfg.conv_mode,
    )


def _restore_denoiser(named: dict, cfg: RunConfig, channels: int) -> df.DenoiserParams:
    den = df.DenoiserParams(channels, cfg.denoiser_hidden, cfg.diff_steps,
                            np.random.default_rng(0))
    den.conv1 = tc.param(named["denoiser/conv1"])
    den.b1 = tc.param(named["denoiser/b1"])
    den.conv2 = tc.param(named["denoiser/conv2"])
    den.b2 = tc.param(named["denoiser/b2"])
    return den


def _denoiser_named(den: df.DenoiserParams) -> dict:
    return {
        "denoiser/conv1": den.conv1.data, "denoiser/b1": den.b1.data,
        "denoiser/conv2": den.conv2.data, "denoiser/b2": den.b2.data,
    }


# -- stages ------------------------------------------------------------------------


def run_stage_pretrain(run_dir: Path, ds: sd.Dataset, frames, cfg: RunConfig) -> None:
    channels = ds.band_spec.channels
    sched = df.linear_schedule(cfg.diff_steps, cfg.beta_start, cfg.beta_end)
    den_frames = [frames[i][t] for i in ds.split.train for t in range(0, cfg.t_steps, 2)]
    den, den_history = df.train_denoiser(
        den_frames, channels, sched, rng_for(cfg.seed, "denoiser"),
        epochs=cfg.denoiser_epochs, lr=cfg.denoiser_lr,
        lam=cfg.lambda_consistency, hidden=cfg.denoiser_hidden,
    )
    result = ct.pretrain_encoder(
        frames, [(s.plot_id, s.season_tag) for s in ds.samples],
        ds.split.train, ds.split.val, den, sched, rng_for(cfg.seed, "pretrain"),
        channels=channels, epochs=cfg.pretrain_epochs, lr=cfg.pretrain_lr,
        batch_size=cfg.batch_size, tau=cfg.temperature, embed_dim=cfg.embed_dim,
        hidden_channels=cfg.hidden_channels, kernel=cfg.kernel_size,
        depth=cfg.augment_depth, sigma_scale=cfg.sigma_scale,
        se_reduction=cfg.se_reduction, shuffle_groups=cfg.shuffle_groups,
        experts=cfg.experts, history=cfg.history,
        attention_mode=cfg.attention_mode, conv_mode=cfg.conv_mode,
    )
    named = {**_denoiser_named(den), **result.lstm.named(), **result.ssa.named(),
             "projection": result.projection.data}
    save_checkpoint(run_dir / "pretrain.ckpt", named)
    with open(run_dir / "pretrain_loss.txt", "w") as fh:
        fh.write("epoch,contrastive_loss\n")
        for epoch, loss in enumerate(result.loss_history):
            fh.write(f"{epoch},{loss!r}\n")
        fh.write("# denoiser per-epoch loss: " + " ".join(repr(v) for v in den_history) + "\n")
    with open(run_dir / "pretrain_stats.kv", "w") as fh:
        for key in sorted(result.stats):
            fh.write(f"{key}={result.stats[key]!r}\n")


def _load_encoder(run_dir: Path, cfg: RunConfig, channels: int):
    named = load_checkpoint(run_dir / "pretrain.ckpt")
    lstm = _restore_lstm(named)
    ssa = _restore_ssa(named, cfg)
    den = _restore_denoiser(named, cfg, channels)
    proj = tc.param(named["projection"])
    return lstm, ssa, den, proj


def _pooled_features(frames, lstm, ssa) -> np.ndarray:
    rows = []
    for f in frames:
        fused = ct.encode_features(f, lstm, ssa)
        rows.append(fused.data.mean(axis=(1, 2)))
    return np.array(rows)


def run_stage_select(run_dir: Path, ds: sd.Dataset, frames, cfg: RunConfig) -> None:
    _require_stage(run_dir, "pretrain")
    lstm, ssa, _, _ = _load_encoder(run_dir, cfg, ds.band_spec.channels)
    feats = _pooled_features(frames, lstm, ssa)
    y = np.array([s.y for s in ds.samples])
    y_std = (y - y[ds.split.train].mean()) / (y[ds.split.train].std() or 1.0)
    fitness = eo.make_probe_fitness(feats, y_std, ds.split.train, ds.split.val,
                                    ridge=cfg.ridge_penalty,
                                    sparsity_weight=cfg.sparsity_weight)
    dim = feats.shape[1]
    if cfg.feature_selector == "eo":
        result = eo.run_eo(dim, fitness, eo.EoConfig(
            n_particles=cfg.eo_particles, max_iter=cfg.eo_iters,
            alpha=cfg.eo_alpha, lam=cfg.eo_lambda, seed=cfg.seed,
        ))
        mask, best, history = result.best_mask, result.best_fitness, result.history
    else:  # "none": keep every channel
        mask = np.ones(dim, dtype=bool)
        best = fitness(mask)
        history = [best]
    with open(run_dir / "mask.txt", "w") as fh:
        fh.write("".join("1" if b else "0" for b in mask) + "\n")
        fh.write(f"{best!r}\n")
    with open(run_dir / "eo_history.txt", "w") as fh:
        fh.write("iteration,best_fitness\n")
        for i, v in enumerate(history):
            fh.write(f"{i},{v!r}\n")


def load_mask(run_dir: Path) -> tuple[np.ndarray, float]:
    lines = (Path(run_dir) / "mask.txt").read_text().splitlines()
    mask = np.array([c == "1" for c in lines[0].strip()])
    return mask, float(lines[1])


def run_stage_train(run_dir: Path, ds: sd.Dataset, frames, cfg: RunConfig) -> None:
    _require_stage(run_dir, "pretrain")
    _require_stage(run_dir, "select")
    lstm, ssa, _, _ = _load_encoder(run_dir, cfg, ds.band_spec.channels)
    mask, _ = load_mask(run_dir)
    y = np.array([s.y for s in ds.samples])
    # warm-up: with the encoder frozen and identity activation the head is a
    # least-squares problem, so full-batch descent runs to convergence
    result = pr.train_final(
        frames, lstm, ssa, mask, y, ds.split.train, ds.split.val,
        rng_for(cfg.seed, "train"), epochs=cfg.train_epochs, lr=cfg.train_lr,
        batch_size=len(ds.split.train), patience=None,
        activation=cfg.head_activation, bias_only=cfg.head_bias_only,
    )
    curve = result.curve
    if cfg.finetune_encoder and not cfg.head_bias_only:
        ft = pr.train_final(
            frames, result.lstm, result.ssa, mask, y, ds.split.train, ds.split.val,
            rng_for(cfg.seed, "train-finetune"), epochs=cfg.finetune_epochs,
            lr=cfg.finetune_lr, batch_size=cfg.batch_size,
            patience=cfg.patience or None, activation=cfg.head_activation,
            finetune_encoder=True, head=result.head,
        )
        offset = curve[-1][0]
        curve = curve + [(offset + e, tr, va) for e, tr, va in ft.curve[1:]]
        result = ft
    named = {**result.lstm.named(), **result.ssa.named(), **result.head.named(),
             "norm/y_mean": np.array(result.y_mean), "norm/y_std": np.array(result.y_std),
             "mask": mask.astype(np.float64)}
    save_checkpoint(run_dir / "model.ckpt", named)
    with open(run_dir / "train_curve.txt", "w") as fh:
        fh.write("epoch,train_mse,val_mse\n")
        for epoch, tr, va in curve:
            fh.write(f"{epoch},{tr!r},{va!r}\n")
        fh.write(f"# best_epoch={result.best_epoch}\n")


class YieldModel:
    """Frozen end-to-end predictor reconstructed from a run's model checkpoint."""

    def __init__(self, lstm, ssa, head, mask, y_mean, y_std, cfg: RunConfig):
        self.lstm, self.ssa, self.head = lstm, ssa, head
        self.sel = np.flatnonzero(mask)
        self.y_mean, self.y_std = y_mean, y_std
        self.cfg = cfg

    @classmethod
    def load(cls, run_dir: Path, cfg: RunConfig) -> "YieldModel":
        named = load_checkpoint(Path(run_dir) / "model.ckpt")
        head = pr.HeadParams(
            w=tc.param(named["head/w"]), b=tc.param(named["head/b"]),
            activation=cfg.head_activation, bias_only=cfg.head_bias_only,
        )
        return cls(
            lstm=_restore_lstm(named), ssa=_restore_ssa(named, cfg), head=head,
            mask=named["mask"] > 0.5, y_mean=float(named["norm/y_mean"]),
            y_std=float(named["norm/y_std"]), cfg=cfg,
        )

    def predict_frames(self, frames_tchw) -> float:
        fused = ct.encode_features(frames_tchw, self.lstm, self.ssa)
        _, scalar = pr.predict_yield(Tensor(fused.data[self.sel]), self.head)
        return self.y_mean + self.y_std * scalar.item()

    def predictor_for(self, ds: sd.Dataset, frames):
        by_id = {id(s): frames[i] for i, s in enumerate(ds.samples)}
        return lambda sample: self.predict_frames(by_id[id(sample)])


def run_stage_evaluate(run_dir: Path, ds: sd.Dataset, frames, cfg: RunConfig) -> None:
    _require_stage(run_dir, "train")
    model = YieldModel.load(run_dir, cfg)
    y_train_mean = float(np.mean([ds.samples[i].y for i in ds.split.train]))
    report = em.evaluate(model.predictor_for(ds, frames), ds, ds.split.test,
                         baseline_constant=y_train_mean)
    em.write_report_table(report, run_dir / "report.txt", percent=cfg.percent)
    em.write_report_kv(report, run_dir / "report.kv")


_RUNNERS = {
    "pretrain": run_stage_pretrain,
    "select": run_stage_select,
    "train": run_stage_train,
    "evaluate": run_stage_evaluate,
}


def run_pipeline(cfg: RunConfig, data_path, out_dir, stage: str | None = None) -> Path:
    """Execute the full pipeline, or exactly one stage resuming from artifacts."""
    if stage is not None and stage not in STAGES:
        raise DomainError(f"unknown stage {stage!r}, expected one of {STAGES}")
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(config_text(cfg))
    ds = _load_split_dataset(data_path, cfg)
    frames = prepare_frames(ds, cfg)
    todo = STAGES if stage is None else (stage,)
    for name in todo:
        _RUNNERS[name](run_dir, ds, frames, cfg)
    return run_dir


# -- report merging and ablation sweeps ---------------------------------------------


def merge_reports(run_dirs, percent: bool = False):
    """Collect per-run metrics, newest-first sorted by MAPE, plus a baseline row.

    Returns (rows, skipped) where each row is (name, mape, rmsle, smape).
    Malformed report files are skipped, not fatal.
    """
    rows = []
    skipped = []
    baseline = None
    for run_dir in run_dirs:
        path = Path(run_dir) / "report.kv"
        try:
            kv = em.read_report_kv(path)
            row = (Path(run_dir).name, float(kv["mape"]), float(kv["rmsle"]), float(kv["smape"]))
        except Exception:
            skipped.append(str(run_dir))
            continue
        rows.append(row)
        if baseline is None and "baseline_mape" in kv:
            baseline = ("mean-baseline", float(kv["baseline_mape"]),
                        float(kv["baseline_rmsle"]), float(kv["baseline_smape"]))
    if baseline is not None:
        rows.append(baseline)
    rows.sort(key=lambda r: r[1])
    if percent:
        rows = [(n, 100 * a, 100 * b, 100 * c) for n, a, b, c in rows]
    return rows, skipped


def format_table(rows) -> str:
    lines = ["model,mape,rmsle,smape"]
    for name, a, b, c in rows:
        lines.append(f"{name},{a:.12g},{b:.12g},{c:.12g}")
    return "\n".join(lines) + "\n"


ATTENTION_SWEEP = (
    ("no_attention", {"attention_mode": "none"}),
    ("shuffle", {"attention_mode": "shuffle_only"}),
    ("senet", {"attention_mode": "se_only"}),
    ("shuffle_senet", {"attention_mode": "shuffle_senet"}),
    ("conv", {"conv_mode": "conv_only"}),
    ("condconv", {"conv_mode": "condconv_only"}),
    ("dilated_conv", {"conv_mode": "dilated"}),
    ("senet_shuffle_conv_condconv", {}),  # the default composition
)

OPTIMIZER_SWEEP = (
    ("no_optimizer", {"feature_selector": "none"}),
    ("equilibrium", {"feature_selector": "eo"}),
)


def run_ablation_sweep(base_cfg: RunConfig, data_path, out_root) -> dict:
    """Run the attention/conv and optimizer switch sweeps into subdirectories
    and emit one comparison table per axis. Returns table paths."""
    from dataclasses import replace

    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    tables = {}
    for axis, sweep in (("attention", ATTENTION_SWEEP), ("optimizer", OPTIMIZER_SWEEP)):
        dirs = []
        for name, overrides in sweep:
            cfg = replace(base_cfg, **overrides).validate()
            run_dir = out_root / axis / name
            if not (run_dir / "report.kv").exists():
                run_pipeline(cfg, data_path, run_dir)
            dirs.append(run_dir)
        rows, _ = merge_reports(dirs, percent=base_cfg.percent)
        table_path = out_root / f"ablation_{axis}.txt"
        table_path.write_text(format_table(rows))
        tables[axis] = table_path
    return tables
