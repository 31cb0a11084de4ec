"""Training loops: fixed-hyperparameter modes and the explore/restore/exploit
schedule that steers the loss hyperparameters with the GP optimizer.

One run owns its model, sampler, and GP state.  Exploration trains a copy of
the model for a short window, scores the loss drop rate, and discards the
copy, so the live model is bit-identical before and after.  Exploitation
commits real training epochs under the EI-selected candidate.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .bayes_opt import (
    ExplorationRecord,
    drop_rate_objective,
    fit_gp,
    initial_design,
    propose,
)
from .losses import HyperParams, LossBreakdown
from .model import (
    AdamState,
    ModelConfig,
    ModelParams,
    OptimizerConfig,
    PARAM_FIELDS,
    adam_step,
    backward,
    beta1_schedule,
    forward_with_cache,
    lr_schedule,
)
from .sampler import BatchSpec, PKSampler

TRAIN_MODES = ("pla", "batch_hard", "ce_only", "triplet_only", "composite_fixed")

CHECKPOINT_MAGIC = b"PMCKPT01"


@dataclass(frozen=True)
class PlaConfig:
    """Budget and phase sizes for the progressive-learning schedule.

    Desk-scale defaults; the reference large-scale settings are
    max_epochs=3000, explore_epochs=20, exploit_epochs=300, initial_design=8.
    """

    max_epochs: int = 120
    initial_design: int = 4
    explore_epochs: int = 6
    exploit_epochs: int = 30
    objective_split: int = 3
    expected_drop: float = 0.15
    batch_spec: BatchSpec = field(default_factory=lambda: BatchSpec(16, 8))
    pool_size: int = 256
    re_explore_policy: str = "all"

    def __post_init__(self):
        if self.explore_epochs != 2 * self.objective_split:
            raise ValueError("explore_epochs must equal 2 * objective_split")
        for n in (self.max_epochs, self.initial_design, self.exploit_epochs,
                  self.objective_split, self.pool_size):
            if n < 1:
                raise ValueError("all counts must be >= 1")
        if self.re_explore_policy not in ("all", "stale"):
            raise ValueError("re_explore_policy must be 'all' or 'stale'")


@dataclass
class Checkpoint:
    """Model weights plus optimizer moments at a given epoch."""

    params: ModelParams
    adam: AdamState
    epoch: int

    @classmethod
    def take(cls, params, adam, epoch):
        return cls(params=params.copy(), adam=adam.copy(), epoch=epoch)


def save_checkpoint(path, ckpt: Checkpoint):
    """Flat binary layout: magic, int64 dims/counters, float64-LE blocks.

    Blocks appear as all weight arrays (row-major, fixed field order),
    then the first-moment arrays, then the second-moment arrays.
    """
    cfg = ckpt.params.config
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<6q", cfg.d_in, cfg.hidden, cfg.embed_dim,
                             cfg.n_classes, ckpt.adam.step, ckpt.epoch))
        for block in ckpt.params.arrays() + ckpt.adam.m + ckpt.adam.v:
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint (bad magic)")
        d_in, hidden, embed_dim, n_classes, step, epoch = struct.unpack(
            "<6q", fh.read(48))
        cfg = ModelConfig(d_in=d_in, hidden=hidden, embed_dim=embed_dim,
                          n_classes=n_classes)
        template = ModelParams.init(cfg, np.random.default_rng(0))

        def read_like(arr):
            buf = fh.read(arr.size * 8)
            if len(buf) != arr.size * 8:
                raise ValueError(f"{path}: truncated checkpoint")
            return np.frombuffer(buf, dtype="<f8").astype(float).reshape(arr.shape)

        params = ModelParams(**{name: read_like(getattr(template, name))
                                for name in PARAM_FIELDS})
        adam = AdamState(
            m=[read_like(a) for a in params.arrays()],
            v=[read_like(a) for a in params.arrays()],
            step=step,
        )
    return Checkpoint(params=params, adam=adam, epoch=epoch)


@dataclass(frozen=True)
class EpochStats:
    """One report row: where the epoch ran and its mean loss terms."""

    phase: str
    candidate: int
    w: HyperParams
    lr: float
    mean_ce: float
    mean_gbh: float
    mean_total: float


@dataclass
class RunReport:
    """Everything a run produced, in epoch order."""

    mode: str
    config_summary: dict
    rows: list = field(default_factory=list)
    explorations: list = field(default_factory=list)
    chosen: list = field(default_factory=list)
    best_loss: float = float("inf")
    total_epochs: int = 0

    def epoch_csv_lines(self):
        yield "phase,candidate,lambda,margin,k,p,lr,mean_ce,mean_gbh,mean_total"
        for r in self.rows:
            yield (f"{r.phase},{r.candidate},{r.w.lam:.17g},{r.w.margin:.17g},"
                   f"{r.w.k},{r.w.p},{r.lr:.17g},{r.mean_ce:.17g},"
                   f"{r.mean_gbh:.17g},{r.mean_total:.17g}")

    def exploration_csv_lines(self):
        yield "round,candidate,lambda,margin,k,p,first_half_mean,second_half_mean,objective"
        for rnd, cand, rec in self.explorations:
            w = rec.hyperparams
            yield (f"{rnd},{cand},{w.lam:.17g},{w.margin:.17g},{w.k},{w.p},"
                   f"{rec.mean_loss_first_half:.17g},"
                   f"{rec.mean_loss_second_half:.17g},"
                   f"{rec.objective_value:.17g}")


@dataclass
class RunResult:
    best_params: ModelParams
    final_params: ModelParams
    report: RunReport


def batch_loss_and_grads(mode, emb, logits, batch_labels, class_ids, w: HyperParams):
    """Loss breakdown and output-level gradients for one batch in a mode."""
    if mode in ("pla", "composite_fixed", "composite"):
        # Composite training mirrors the two-head split: the triplet term
        # sees only the triplet head's half of the embedding, cross-entropy
        # reaches the softmax head through the logits.  Single-loss modes
        # give the whole embedding to their one loss.
        half = emb.shape[1] // 2
        trip = emb[:, :half]
        breakdown = losses.composite_loss(trip, batch_labels, logits, class_ids, w)
        d_trip, d_logits = losses.composite_loss_grad(
            trip, batch_labels, logits, class_ids, w)
        d_emb = np.zeros_like(emb)
        d_emb[:, :half] = d_trip
    elif mode == "ce_only":
        ce = losses.cross_entropy_loss(logits, class_ids)
        breakdown = LossBreakdown(softmax_term=ce, gbh_term=0.0, total=ce)
        d_emb = np.zeros_like(emb)
        d_logits = losses.cross_entropy_grad(logits, class_ids)
    elif mode == "triplet_only":
        value, d_emb = losses.gbh_loss_grad(emb, batch_labels, w)
        breakdown = LossBreakdown(softmax_term=0.0, gbh_term=value, total=value)
        d_logits = np.zeros_like(logits)
    elif mode == "batch_hard":
        value, d_emb = losses.batch_hard_grad(emb, batch_labels, w.margin)
        breakdown = LossBreakdown(softmax_term=0.0, gbh_term=value, total=value)
        d_logits = np.zeros_like(logits)
    else:
        raise ValueError(f"unknown training mode {mode!r}")
    return breakdown, d_emb, d_logits


class TrainingRun:
    """Mutable training state: model, optimizer, sampler, epoch counter."""

    def __init__(self, features, labels, model_cfg: ModelConfig,
                 opt_cfg: OptimizerConfig, batch_spec: BatchSpec, seed):
        self.features = np.asarray(features, dtype=float)
        self.labels = np.asarray(labels)
        classes = np.unique(self.labels)
        self.class_index = {ident: i for i, ident in enumerate(classes)}
        self.model_cfg = ModelConfig(
            d_in=model_cfg.d_in, hidden=model_cfg.hidden,
            embed_dim=model_cfg.embed_dim, n_classes=len(classes))
        rng = np.random.default_rng(seed)
        self.params = ModelParams.init(self.model_cfg, rng)
        self.adam = AdamState.zeros_like(self.params)
        self.sampler = PKSampler(self.labels, batch_spec, rng.integers(2**63))
        self.opt_cfg = opt_cfg
        self.epoch = 0  # global epoch counter; never rewound by restoration

    def class_ids_for(self, labels):
        return np.array([self.class_index[l] for l in labels])

    def train_epochs(self, mode, w: HyperParams, n_epochs, phase, candidate,
                     report: RunReport | None = None):
        """Run n_epochs of mini-batch training; returns per-epoch stats."""
        stats = []
        for _ in range(n_epochs):
            lr = lr_schedule(self.epoch, self.opt_cfg)
            beta1 = beta1_schedule(self.epoch, self.opt_cfg)
            acc = np.zeros(3)
            for _ in range(self.sampler.batches_per_epoch):
                idx = self.sampler.sample()
                x = self.features[idx]
                batch_labels = self.labels[idx]
                emb, logits, cache = forward_with_cache(self.params, x)
                breakdown, d_emb, d_logits = batch_loss_and_grads(
                    mode, emb, logits, batch_labels,
                    self.class_ids_for(batch_labels), w)
                grads = backward(self.params, cache, d_emb, d_logits)
                adam_step(self.params, grads, self.adam, lr, beta1, self.opt_cfg)
                acc += (breakdown.softmax_term, breakdown.gbh_term, breakdown.total)
            acc /= self.sampler.batches_per_epoch
            row = EpochStats(phase=phase, candidate=candidate, w=w, lr=lr,
                             mean_ce=acc[0], mean_gbh=acc[1], mean_total=acc[2])
            stats.append(row)
            if report is not None:
                report.rows.append(row)
                report.total_epochs += 1
            self.epoch += 1
        return stats

    def snapshot(self):
        return Checkpoint.take(self.params, self.adam, self.epoch)

    def restore(self, ckpt: Checkpoint):
        self.params = ckpt.params.copy()
        self.adam = ckpt.adam.copy()


def explore(run: TrainingRun, w: HyperParams, cfg: PlaConfig, candidate,
            report: RunReport | None = None):
    """Short trial training under w; the model is rolled back afterward.

    Scores |relative drop of the mean loss between the two halves - ED|.
    """
    ckpt = run.snapshot()
    stats = run.train_epochs("composite", w, cfg.explore_epochs,
                             phase="explore", candidate=candidate, report=report)
    totals = [s.mean_total for s in stats]
    half = cfg.objective_split
    first = float(np.mean(totals[:half]))
    second = float(np.mean(totals[half:]))
    objective = drop_rate_objective(first, second, cfg.expected_drop)
    run.restore(ckpt)
    return ExplorationRecord(
        hyperparams=w,
        mean_loss_first_half=first,
        mean_loss_second_half=second,
        objective_value=objective,
    )


def run_fixed(features, labels, mode, w: HyperParams, n_epochs,
              model_cfg: ModelConfig, opt_cfg: OptimizerConfig,
              batch_spec: BatchSpec, seed):
    """Train one fixed-hyperparameter mode for n_epochs."""
    if mode not in TRAIN_MODES or mode == "pla":
        raise ValueError(f"run_fixed cannot run mode {mode!r}")
    if mode == "ce_only":
        w = HyperParams(lam=0.0, margin=w.margin, k=w.k, p=w.p)
    run = TrainingRun(features, labels, model_cfg, opt_cfg, batch_spec, seed)
    report = RunReport(mode=mode, config_summary={
        "mode": mode, "epochs": n_epochs, "seed": seed,
        "lambda": w.lam, "margin": w.margin, "k": w.k, "p": w.p})
    best_params = run.params.copy()
    best = float("inf")
    stats = run.train_epochs(mode, w, n_epochs, phase="train", candidate=0,
                             report=report)
    for s in stats:
        if s.mean_total < best:
            best = s.mean_total
    # Fixed modes keep the final model; "best" tracks the lowest epoch mean.
    report.best_loss = best
    best_params = run.params.copy()
    return RunResult(best_params=best_params, final_params=run.params,
                     report=report)


def run_pla(features, labels, pla_cfg: PlaConfig, model_cfg: ModelConfig,
            opt_cfg: OptimizerConfig, seed):
    """Full progressive schedule: explore candidates, propose via EI, exploit.

    Repeats {explore each candidate per policy; fit GP; propose a new
    candidate; train exploit_epochs under it; track the model with the
    lowest exploitation-phase mean loss} until the epoch budget is spent.
    """
    run = TrainingRun(features, labels, model_cfg, opt_cfg,
                      pla_cfg.batch_spec, seed)
    bo_rng = np.random.default_rng(np.random.default_rng(seed).integers(2**63) ^ 0x5EED)
    report = RunReport(mode="pla", config_summary={
        "mode": "pla", "seed": seed,
        "max_epochs": pla_cfg.max_epochs,
        "initial_design": pla_cfg.initial_design,
        "explore_epochs": pla_cfg.explore_epochs,
        "exploit_epochs": pla_cfg.exploit_epochs,
        "expected_drop": pla_cfg.expected_drop,
        "pool_size": pla_cfg.pool_size,
        "re_explore_policy": pla_cfg.re_explore_policy,
    })
    candidates = list(initial_design(bo_rng, pla_cfg.initial_design))
    objectives = [None] * len(candidates)
    best_params = run.params.copy()
    best_loss = float("inf")
    round_idx = 0
    while True:
        round_idx += 1
        for i, w in enumerate(candidates):
            if pla_cfg.re_explore_policy == "stale" and objectives[i] is not None:
                continue
            rec = explore(run, w, pla_cfg, candidate=i, report=report)
            objectives[i] = rec.objective_value
            report.explorations.append((round_idx, i, rec))
        if report.total_epochs >= pla_cfg.max_epochs:
            break
        gp = fit_gp(candidates, objectives)
        w_new = propose(gp, pla_cfg.pool_size, bo_rng)
        candidates.append(w_new)
        objectives.append(None)
        report.chosen.append(w_new)
        stats = run.train_epochs("pla", w_new, pla_cfg.exploit_epochs,
                                 phase="exploit", candidate=len(candidates) - 1,
                                 report=report)
        phase_mean = float(np.mean([s.mean_total for s in stats]))
        if phase_mean < best_loss:
            best_loss = phase_mean
            best_params = run.params.copy()
        if report.total_epochs >= pla_cfg.max_epochs:
            break
    report.best_loss = best_loss
    return RunResult(best_params=best_params, final_params=run.params,
                     report=report)
