"""End-to-end training loop: schedules, per-step combined objective, SGD with
momentum, ablation switches, JSON-lines logging and periodic evaluation.

One step samples a mixed batch with two stochastic views, runs every enabled
branch forward, assembles

    total = discovery + sdl_weight * detector + adl_weight * debiased

and applies a single parameter update. Disabled branches are not computed at
all, so their parameters stay frozen and the remaining trajectory is
unchanged. Everything is driven by one seeded generator; two runs with the
same config produce byte-identical logs and checkpoints.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from gcdlib import adl as A
from gcdlib import compute as C
from gcdlib import gcd_head as G
from gcdlib import kernels
from gcdlib import metrics
from gcdlib import sdl as S
from gcdlib.config import Config
from gcdlib.data import AugConfig, BatchViews, EmbeddingDataset, sample_batch
from gcdlib.errors import ConfigError, NumericError
from gcdlib.model import (
    ADAPTER_RESIDUAL_SCALE,
    ModelState,
    forward_backbone,
    init_model,
    rep_projection,
    sdl_projection,
)

LOSS_FIELDS = (
    "l_cls_u", "l_cls_s", "l_rep", "l_gcd",
    "l_sdl_s", "l_sdl_u", "l_sdl",
    "l_adl_s", "l_adl_u", "l_adl",
    "l_all",
)


@dataclass
class LossReport:
    l_cls_u: float = 0.0
    l_cls_s: float = 0.0
    l_rep: float = 0.0
    l_gcd: float = 0.0
    l_sdl_s: float = 0.0
    l_sdl_u: float = 0.0
    l_sdl: float = 0.0
    l_adl_s: float = 0.0
    l_adl_u: float = 0.0
    l_adl: float = 0.0
    l_all: float = 0.0
    flags: tuple = ()

    def as_dict(self) -> dict:
        out = {name: getattr(self, name) for name in LOSS_FIELDS}
        if self.flags:
            out["flags"] = list(self.flags)
        return out


@dataclass
class TrainLog:
    steps: list = field(default_factory=list)
    epochs: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# schedules


def cosine_lr(step: int, total_steps: int, lr_start: float, lr_floor: float) -> float:
    """Cosine decay from lr_start at step 0 to lr_floor at total_steps."""
    if not (0 <= step <= total_steps):
        raise ConfigError(f"step {step} outside [0, {total_steps}]")
    return lr_floor + 0.5 * (lr_start - lr_floor) * (1.0 + math.cos(math.pi * step / total_steps))


def teacher_temp(epoch: int, cfg: Config) -> float:
    """Cosine sharpening of the teacher temperature over the warm-up epochs,
    constant afterwards."""
    if epoch < 0:
        raise ConfigError("epoch must be >= 0")
    if epoch >= cfg.teacher_warmup_epochs:
        return cfg.teacher_temp_end
    span = cfg.teacher_temp_start - cfg.teacher_temp_end
    return cfg.teacher_temp_end + 0.5 * span * (
        1.0 + math.cos(math.pi * epoch / cfg.teacher_warmup_epochs)
    )


# ---------------------------------------------------------------------------
# one step


@dataclass
class StepTargets:
    """Gradient-blocked per-step machinery: sharpened teacher predictions,
    hardest-negative picks and pseudo-label decisions.

    During training these are recomputed from the live parameters each step.
    The gradient checker captures them once and re-injects them, because the
    objective actually optimized treats them as constants."""

    teacher: tuple | None = None          # per view (b, K) arrays
    sdl_hardest: tuple | None = None      # per view (b_l,) index arrays
    adl_decisions: tuple | None = None    # per view DebiasDecision


@dataclass
class StepComputation:
    terms: dict                # name -> scalar tape tensor for enabled branches
    report: LossReport
    events: tuple | None       # (row_ids, weights) over both views, or None
    targets: StepTargets


def compute_step(state: ModelState, batch: BatchViews, cfg: Config,
                 tau_t: float, frozen: StepTargets | None = None) -> StepComputation:
    """Forward every enabled branch and assemble the combined objective."""
    p = state.params
    k = state.num_total_classes
    m = state.num_old_classes
    lab_idx = np.flatnonzero(batch.labelled_mask)
    unlab_idx = np.flatnonzero(~batch.labelled_mask)
    labels = batch.labels[lab_idx]
    flags: list[str] = []
    used = StepTargets()

    views = []
    for view_data in (batch.view1, batch.view2):
        phi, h = forward_backbone(state, view_data)
        views.append((phi, h))

    terms: dict[str, C.Tensor] = {}
    total: C.Tensor | None = None
    report = LossReport()

    student = None
    if cfg.enable_gcd:
        student = tuple(
            G.gcd_forward(h, p["gcd.prototypes"], cfg.student_temp) for _, h in views
        )
        if frozen is not None and frozen.teacher is not None:
            teacher = frozen.teacher
        else:
            teacher = tuple(
                G.teacher_probs(h.data, p["gcd.prototypes"].data, tau_t) for _, h in views
            )
        used.teacher = teacher
        l_cls_u = G.cls_unsup_loss(student, teacher, cfg.mean_entropy_weight,
                                   cfg.symmetric_distillation)
        student_lab = tuple(C.gather_rows(s, lab_idx) for s in student)
        l_cls_s, empty = G.cls_sup_loss(student_lab, labels, k)
        if empty:
            flags.append("empty_labelled_batch")
        z1 = rep_projection(state, views[0][0])
        z2 = rep_projection(state, views[1][0])
        l_rep = G.rep_loss(z1, z2, batch.labelled_mask, batch.labels,
                           cfg.contrast_temp_unsup, cfg.contrast_temp_sup,
                           cfg.cls_balance)
        l_gcd = G.gcd_loss(l_cls_u, l_cls_s, l_rep, cfg.cls_balance)
        terms.update(l_cls_u=l_cls_u, l_cls_s=l_cls_s, l_rep=l_rep, l_gcd=l_gcd)
        report.l_cls_u = l_cls_u.item()
        report.l_cls_s = l_cls_s.item()
        report.l_rep = l_rep.item()
        report.l_gcd = l_gcd.item()
        total = l_gcd

    ova_views = None
    if cfg.enable_sdl:
        ova_views = []
        hardest_used = []
        view_losses = {"l_sdl_s": [], "l_sdl_u": []}
        for v, (phi, _) in enumerate(views):
            f = sdl_projection(state, phi)
            ova = S.sdl_forward(f, p["sdl.pos"], p["sdl.neg"], cfg.ova_temp)
            ova_views.append(ova)
            if lab_idx.size:
                ova_lab = S.OvaOutput(C.gather_rows(ova.o_plus, lab_idx),
                                      C.gather_rows(ova.o_minus, lab_idx))
                if frozen is not None and frozen.sdl_hardest is not None:
                    hardest = frozen.sdl_hardest[v]
                else:
                    hardest = S.hardest_negatives(ova_lab.o_plus.data, labels)
                hardest_used.append(hardest)
                l_s = S.sdl_sup_loss(ova_lab, labels, hardest)
            else:
                l_s = C.constant(0.0)
            l_u = S.sdl_unsup_loss(
                S.OvaOutput(C.gather_rows(ova.o_plus, unlab_idx),
                            C.gather_rows(ova.o_minus, unlab_idx)),
            ) if unlab_idx.size else C.constant(0.0)
            view_losses["l_sdl_s"].append(l_s)
            view_losses["l_sdl_u"].append(l_u)
        used.sdl_hardest = tuple(hardest_used) if hardest_used else None
        l_sdl_s = C.scale(C.add(*view_losses["l_sdl_s"]), 0.5)
        l_sdl_u = C.scale(C.add(*view_losses["l_sdl_u"]), 0.5)
        l_sdl = C.add(l_sdl_s, l_sdl_u)
        terms.update(l_sdl_s=l_sdl_s, l_sdl_u=l_sdl_u, l_sdl=l_sdl)
        report.l_sdl_s = l_sdl_s.item()
        report.l_sdl_u = l_sdl_u.item()
        report.l_sdl = l_sdl.item()
        weighted = C.scale(l_sdl, cfg.sdl_weight)
        total = weighted if total is None else C.add(total, weighted)

    events = None
    if cfg.enable_adl:
        proto_name = "gcd.prototypes" if cfg.debias_on_gcd_classifier else "adl.prototypes"
        event_ids: list[np.ndarray] = []
        event_weights: list[np.ndarray] = []
        decisions_used = []
        view_losses = {"l_adl_s": [], "l_adl_u": []}
        for v, (phi, h) in enumerate(views):
            if cfg.debias_on_gcd_classifier:
                probs = student[v]
            else:
                probs = A.adl_forward(h, p[proto_name], cfg.debias_temp)
            if unlab_idx.size:
                if frozen is not None and frozen.adl_decisions is not None:
                    decision = frozen.adl_decisions[v]
                else:
                    if cfg.enable_distribution_guidance:
                        scores = S.ood_score(S.OvaOutput(
                            C.gather_rows(ova_views[v].o_plus, unlab_idx),
                            C.gather_rows(ova_views[v].o_minus, unlab_idx),
                        ))
                    else:
                        scores = None
                    decision = A.debias_weights(
                        student[v].data[unlab_idx], scores, cfg.debias_threshold, m,
                        use_guidance=cfg.enable_distribution_guidance,
                    )
                decisions_used.append(decision)
                l_u = A.adl_unsup_loss(C.gather_rows(probs, unlab_idx), decision,
                                       unlab_idx.size)
                event_ids.append(batch.indices[unlab_idx])
                event_weights.append(decision.weight)
            else:
                l_u = C.constant(0.0)
            l_s, empty = A.adl_sup_loss(C.gather_rows(probs, lab_idx), labels, k)
            if empty and "empty_labelled_batch" not in flags:
                flags.append("empty_labelled_batch")
            view_losses["l_adl_s"].append(l_s)
            view_losses["l_adl_u"].append(l_u)
        used.adl_decisions = tuple(decisions_used) if decisions_used else None
        l_adl_s = C.scale(C.add(*view_losses["l_adl_s"]), 0.5)
        l_adl_u = C.scale(C.add(*view_losses["l_adl_u"]), 0.5)
        l_adl = A.adl_loss(l_adl_s, l_adl_u)
        terms.update(l_adl_s=l_adl_s, l_adl_u=l_adl_u, l_adl=l_adl)
        report.l_adl_s = l_adl_s.item()
        report.l_adl_u = l_adl_u.item()
        report.l_adl = l_adl.item()
        weighted = C.scale(l_adl, cfg.adl_weight)
        total = weighted if total is None else C.add(total, weighted)
        if event_ids:
            events = (np.concatenate(event_ids), np.concatenate(event_weights))

    if total is None:
        raise ConfigError("all branches disabled; nothing to train")
    terms["l_all"] = total
    report.l_all = total.item()
    report.flags = tuple(flags)
    return StepComputation(terms=terms, report=report, events=events, targets=used)


def train_step(state: ModelState, batch: BatchViews, cfg: Config, lr: float,
               tau_t: float, velocities: dict):
    """One forward/backward pass and one SGD-with-momentum update."""
    state.params.zero_grad()
    comp = compute_step(state, batch, cfg, tau_t)
    values = comp.report.as_dict()
    if not all(np.isfinite(v) for name, v in values.items() if name in LOSS_FIELDS):
        raise NumericError(f"non-finite loss term during training: {values}")
    comp.terms["l_all"].backward()
    for name, param in state.params.items():
        if param.grad is not None:
            kernels.sgd_update(param.data, param.grad, velocities[name],
                               lr, cfg.momentum, cfg.weight_decay)
    return comp.report, comp.events


# ---------------------------------------------------------------------------
# evaluation helpers


def infer(state: ModelState, features: np.ndarray, chunk_size: int = 4096):
    """Gradient-free inference: predicted cluster ids and detection scores."""
    p = state.params
    preds = []
    scores = []
    protos, _ = kernels.l2norm_rows(p["gcd.prototypes"].data)
    pos, _ = kernels.l2norm_rows(p["sdl.pos"].data)
    neg, _ = kernels.l2norm_rows(p["sdl.neg"].data)
    for start in range(0, features.shape[0], chunk_size):
        x = np.ascontiguousarray(features[start:start + chunk_size], dtype=np.float64)
        hidden = kernels.gelu(x @ p["adapter.layer0.W"].data + p["adapter.layer0.b"].data)
        delta = hidden @ p["adapter.layer1.W"].data + p["adapter.layer1.b"].data
        phi = x + ADAPTER_RESIDUAL_SCALE * delta
        h, _ = kernels.l2norm_rows(phi)
        preds.append((h @ protos.T).argmax(axis=1))

        f = phi
        spec = state.sdl_spec
        for i in range(spec.num_layers):
            f = f @ p[f"sdl.layer{i}.W"].data + p[f"sdl.layer{i}.b"].data
            if i < spec.num_layers - 1:
                f = kernels.gelu(f)
        f, _ = kernels.l2norm_rows(f)
        delta = (f @ pos.T - f @ neg.T) / state.config.ova_temp
        o_minus = kernels.sigmoid(-delta)
        top = kernels.sigmoid(delta).argmax(axis=1)
        scores.append(o_minus[np.arange(o_minus.shape[0]), top])
    return np.concatenate(preds), np.concatenate(scores)


def evaluate_model(state: ModelState, dataset: EmbeddingDataset) -> metrics.EvalReport:
    """Clustering accuracy, detector AUROC and error taxonomy on the
    unlabelled rows (the only place ground truth of unlabelled rows is read)."""
    unlab = dataset.unlabelled_indices
    pred, scores = infer(state, dataset.features[unlab])
    gt = dataset.ground_truth[unlab]
    return metrics.evaluate_predictions(pred, gt, scores,
                                        dataset.num_old_classes,
                                        dataset.num_total_classes)


# ---------------------------------------------------------------------------
# full loop


def _iters_per_epoch(cfg: Config, dataset: EmbeddingDataset) -> int:
    if cfg.iters_per_epoch > 0:
        return cfg.iters_per_epoch
    unlab_per_batch = cfg.batch_size - int(round(cfg.batch_size * cfg.labelled_fraction))
    return max(1, math.ceil(dataset.unlabelled_indices.size / max(1, unlab_per_batch)))


def train(dataset: EmbeddingDataset, cfg: Config, log_stream=None):
    """Run the full schedule; returns (final model state, TrainLog).

    When log_stream is given, every step and epoch record is also written to
    it as one JSON line.
    """
    cfg.validate()
    if cfg.enable_adl and not cfg.enable_gcd:
        raise ConfigError("the debiased branch needs the discovery classifier enabled")
    if cfg.debias_on_gcd_classifier and not cfg.enable_adl:
        raise ConfigError("debias_on_gcd_classifier needs enable_adl=true")

    state = init_model(dataset.dim, dataset.num_total_classes,
                       dataset.num_old_classes, cfg, seed=cfg.seed)
    rng = np.random.default_rng([cfg.seed, 1])
    aug = AugConfig(cfg.aug_noise_sigma, cfg.aug_dropout, cfg.aug_renormalize)
    velocities = {name: np.zeros_like(p.data) for name, p in state.params.items()}

    iters = _iters_per_epoch(cfg, dataset)
    total_steps = cfg.epochs * iters
    log = TrainLog()

    def emit(record: dict):
        if record["type"] == "step":
            log.steps.append(record)
        else:
            log.epochs.append(record)
        if log_stream is not None:
            log_stream.write(json.dumps(record) + "\n")

    step = 0
    for epoch in range(cfg.epochs):
        tau_t = teacher_temp(epoch, cfg)
        epoch_ids: list[np.ndarray] = []
        epoch_weights: list[np.ndarray] = []
        for _ in range(iters):
            lr = cosine_lr(step, total_steps, cfg.lr, cfg.lr_floor)
            batch = sample_batch(dataset, cfg.batch_size, cfg.labelled_fraction, aug, rng)
            report, events = train_step(state, batch, cfg, lr, tau_t, velocities)
            if events is not None:
                epoch_ids.append(events[0])
                epoch_weights.append(events[1])
            record = {"type": "step", "step": step, "epoch": epoch,
                      "lr": lr, "tau_t": tau_t}
            record.update(report.as_dict())
            emit(record)
            step += 1

        if epoch_ids:
            weights = np.concatenate(epoch_weights)
            gt = dataset.ground_truth[np.concatenate(epoch_ids)]
            util_all = float((weights > 0).mean())
            util_old, util_new = metrics.utilization_split(
                weights, gt, dataset.num_old_classes)
        else:
            util_all, util_old, util_new = None, None, None
        record = {"type": "epoch", "epoch": epoch, "utilization": util_all,
                  "utilization_old": util_old, "utilization_new": util_new}
        if (epoch + 1) % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            record.update(evaluate_model(state, dataset).as_dict())
        emit(record)
    return state, log
