"""Training loop: batching, loss assembly, AdamW, LR and alpha schedules.

Runs are deterministic: parameter init, batch shuffling, and dataset noise all
derive from explicit seeds, and every tensor op keeps a fixed summation order,
so one config + seed reproduces bit-identical checkpoints on one machine.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tks
from .autodiff import DTYPE, GradTape, SurrogateSpec, backward
from .data import Dataset, build_dataset, prepare_sequence
from .errors import ConfigError, ContractError, ParameterError, TrainingAbort
from .lif import LifConfig
from .network import Model, build_model, load_checkpoint, save_checkpoint, unroll
from .tks import AlphaSchedule, TeacherConfig


class AdamW:
    """Adaptive-moment update with decoupled weight decay; clears grads on step."""

    def __init__(self, params, lr: float, weight_decay: float = 0.01,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.names = [n for n, _ in params]
        self.params = [p for _, p in params]
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for name, p in zip(self.names, self.params):
            if p.grad is None:
                raise ContractError(f"optimizer_step before backward: no grad on {name}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if self.weight_decay:
                p.data *= DTYPE(1.0 - self.lr * self.weight_decay)
            m *= DTYPE(self.beta1)
            m += DTYPE(1.0 - self.beta1) * g
            v *= DTYPE(self.beta2)
            v += DTYPE(1.0 - self.beta2) * (g * g)
            m_hat = m / DTYPE(bc1)
            v_hat = v / DTYPE(bc2)
            p.data -= DTYPE(self.lr) * m_hat / (np.sqrt(v_hat) + DTYPE(self.eps))
            p.grad = None

    def moment_blobs(self):
        out = []
        for m, v in zip(self.m, self.v):
            out.append(m)
            out.append(v)
        return out

    def load_state(self, step_count: int, moments):
        self.step_count = int(step_count)
        it = iter(moments)
        for i in range(len(self.params)):
            self.m[i] = next(it).astype(DTYPE)
            self.v[i] = next(it).astype(DTYPE)


def optimizer_step(opt: AdamW) -> None:
    opt.step()


def cosine_lr(epoch: int, total_epochs: int, lr_max: float, lr_min: float) -> float:
    """Cosine annealing from lr_max (epoch 0) to lr_min (final epoch)."""
    if total_epochs <= 1:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * epoch / (total_epochs - 1)))


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class OptimConfig:
    lr_max: float = 5e-3
    lr_min: float = 0.0
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 0.0


@dataclass(frozen=True)
class DataConfig:
    kind: str = "synth"
    # synth
    n_per_class: int = 150
    t_native: int = 10
    classes: int = 4
    noise_sigma: float = 0.3
    seed: int = 0
    # idx
    images: str = ""
    labels: str = ""


@dataclass(frozen=True)
class RunConfig:
    preset: str = "mlp-small"
    lif: LifConfig = field(default_factory=LifConfig)
    surrogate: SurrogateSpec = field(default_factory=SurrogateSpec)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    alpha_start: float = 0.0
    alpha_end: float = 0.7
    optim: OptimConfig = field(default_factory=OptimConfig)
    data: DataConfig = field(default_factory=DataConfig)
    t_train: int = 10
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    out_dir: str = "runs/default"

    def validate(self):
        if self.t_train < 1:
            raise ConfigError(f"t_train must be >= 1, got {self.t_train}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.teacher.mode == "tks" and self.teacher.k > self.t_train:
            raise ConfigError(
                f"teacher.k ({self.teacher.k}) cannot exceed t_train ({self.t_train})"
            )
        if self.data.kind not in ("synth", "idx"):
            raise ConfigError(f"unknown data kind {self.data.kind!r}")


_SECTION_FIELDS = {
    "model": {"preset"},
    "lif": {"tau_m", "v_th", "v_rest", "detach_reset"},
    "surrogate": {"kind", "width"},
    "teacher": {"mode", "k", "tau", "epsilon"},
    "schedule": {"alpha_start", "alpha_end"},
    "optimizer": {"lr_max", "lr_min", "weight_decay", "beta1", "beta2", "eps", "grad_clip"},
    "data": {"kind", "n_per_class", "t_native", "classes", "noise_sigma", "seed",
             "images", "labels"},
    "run": {"t_train", "epochs", "batch_size", "seed", "out_dir"},
}


def config_from_dict(raw: dict) -> RunConfig:
    """Parse the sectioned JSON config; unknown sections or keys are errors."""
    for section, keys in raw.items():
        if section not in _SECTION_FIELDS:
            raise ConfigError(f"unknown config section {section!r}")
        bad = set(keys) - _SECTION_FIELDS[section]
        if bad:
            raise ConfigError(f"unknown key(s) in [{section}]: {sorted(bad)}")
    model = raw.get("model", {})
    sched = raw.get("schedule", {})
    run = raw.get("run", {})
    try:
        cfg = RunConfig(
            preset=model.get("preset", "mlp-small"),
            lif=LifConfig(**raw.get("lif", {})),
            surrogate=SurrogateSpec(**raw.get("surrogate", {})),
            teacher=TeacherConfig(**raw.get("teacher", {})),
            alpha_start=sched.get("alpha_start", 0.0),
            alpha_end=sched.get("alpha_end", 0.7),
            optim=OptimConfig(**raw.get("optimizer", {})),
            data=DataConfig(**raw.get("data", {})),
            **run,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    return {
        "model": {"preset": cfg.preset},
        "lif": asdict(cfg.lif),
        "surrogate": asdict(cfg.surrogate),
        "teacher": asdict(cfg.teacher),
        "schedule": {"alpha_start": cfg.alpha_start, "alpha_end": cfg.alpha_end},
        "optimizer": asdict(cfg.optim),
        "data": asdict(cfg.data),
        "run": {"t_train": cfg.t_train, "epochs": cfg.epochs,
                "batch_size": cfg.batch_size, "seed": cfg.seed, "out_dir": cfg.out_dir},
    }


# ---------------------------------------------------------------------------
# epoch loop


@dataclass
class EpochReport:
    epoch: int
    lr: float
    alpha: float
    l_ce: float
    l_tks: float
    l_final: float
    train_acc: float
    wall_ms: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def _clip_grads(params, max_norm: float):
    total = 0.0
    for p in params:
        total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = math.sqrt(total)
    if norm > max_norm:
        factor = DTYPE(max_norm / norm)
        for p in params:
            p.grad = p.grad * factor


def train_epoch(model: Model, data: Dataset, cfg: RunConfig, epoch: int,
                opt: AdamW, alpha: float) -> EpochReport:
    """One pass over the training set; returns mean losses and train accuracy."""
    start = time.perf_counter()
    tc = cfg.teacher
    rng = np.random.default_rng([cfg.seed, epoch, 0x5EED])
    order = rng.permutation(data.inputs.shape[0])
    sum_ce = sum_tks = 0.0
    n_batches = 0
    correct = 0
    for bi, lo in enumerate(range(0, len(order), cfg.batch_size)):
        idx = order[lo : lo + cfg.batch_size]
        x_seq = prepare_sequence(data.inputs[idx], data.temporal, cfg.t_train)
        y = data.labels[idx]
        with GradTape() as tape:
            out = unroll(model, x_seq)
            l_ce_t = tks.ce_loss(out.v, y)
            l_ce = l_ce_t.item()
            l_tks = 0.0
            if tc.mode == "tks":
                sel = tks.select_teachers(out.v.data, y, tc.k)
                z = tks.teacher_signal(out.q.data, sel, tc.tau)
                if alpha > 0.0:
                    l_tks_t = tks.tks_loss(out.v, z)
                    l_tks = l_tks_t.item()
                    loss = tks.final_loss(l_ce_t, l_tks_t, alpha, tc.tau)
                else:
                    # at alpha=0 the mix is pure CE; keep the graph identical
                    # to a plain CE run so the trajectories match bit for bit
                    l_tks = tks.tks_loss(out.v.detach(), z).item()
                    loss = l_ce_t
            elif tc.mode == "none":
                loss = l_ce_t
            else:
                loss = tks.baseline_loss(tc.mode, out.v, y, tc.epsilon)
                l_ce = loss.item()
            l_final = (1.0 - alpha) * l_ce + alpha * tc.tau**2 * l_tks
            if not math.isfinite(l_final):
                raise TrainingAbort(
                    f"non-finite loss at epoch {epoch} batch {bi}: "
                    f"l_ce={l_ce} l_tks={l_tks} l_final={l_final}"
                )
        backward(loss, tape)
        if cfg.optim.grad_clip > 0:
            _clip_grads(opt.params, cfg.optim.grad_clip)
        opt.step()
        correct += int((out.o.data.argmax(axis=1) == y).sum())
        sum_ce += l_ce
        sum_tks += l_tks
        n_batches += 1
    mean_ce = sum_ce / n_batches
    mean_tks = sum_tks / n_batches
    return EpochReport(
        epoch=epoch,
        lr=opt.lr,
        alpha=alpha,
        l_ce=mean_ce,
        l_tks=mean_tks,
        l_final=(1.0 - alpha) * mean_ce + alpha * tc.tau**2 * mean_tks,
        train_acc=correct / len(order),
        wall_ms=(time.perf_counter() - start) * 1e3,
    )


def fit(cfg: RunConfig, resume: str | None = None):
    """Full training run: writes a checkpoint and one metrics record per epoch.

    Returns (model, list of EpochReport).
    """
    cfg.validate()
    data = build_dataset(cfg.data, split="train")
    os.makedirs(cfg.out_dir, exist_ok=True)
    ckpt_path = os.path.join(cfg.out_dir, "model.ckpt")
    metrics_path = os.path.join(cfg.out_dir, "metrics.jsonl")

    input_shape = data.sample_shape
    start_epoch = 0
    if resume is not None:
        model, header, opt_state = load_checkpoint(resume)
        start_epoch = int(header["epoch"])
        opt = AdamW(model.parameters(), lr=cfg.optim.lr_max,
                    weight_decay=cfg.optim.weight_decay,
                    betas=(cfg.optim.beta1, cfg.optim.beta2), eps=cfg.optim.eps)
        if opt_state is not None:
            opt.load_state(*opt_state)
        mode = "a"
    else:
        model = build_model(cfg.preset, input_shape, data.class_count,
                            cfg.lif, cfg.surrogate, cfg.seed)
        opt = AdamW(model.parameters(), lr=cfg.optim.lr_max,
                    weight_decay=cfg.optim.weight_decay,
                    betas=(cfg.optim.beta1, cfg.optim.beta2), eps=cfg.optim.eps)
        mode = "w"

    sched = AlphaSchedule(cfg.alpha_start, cfg.alpha_end, max(cfg.epochs, 1))
    reports = []
    with open(metrics_path, mode) as metrics:
        for epoch in range(start_epoch, cfg.epochs):
            opt.lr = cosine_lr(epoch, cfg.epochs, cfg.optim.lr_max, cfg.optim.lr_min)
            alpha = tks.alpha_at(epoch, sched) if cfg.teacher.mode == "tks" else 0.0
            report = train_epoch(model, data, cfg, epoch, opt, alpha)
            metrics.write(report.to_json() + "\n")
            metrics.flush()
            reports.append(report)
    save_checkpoint(ckpt_path, model, epoch=cfg.epochs, optimizer=opt)
    return model, reports
