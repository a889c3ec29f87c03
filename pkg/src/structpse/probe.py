"""Linear probe from handcrafted node inputs to P/SE targets.

Loss is MAE plus a per-group cosine term, optimized full-batch with AdamW under
a linear-warmup / cosine-decay learning-rate schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .graph import Graph, RandomFeatureSpec, inject_random_features

DESCRIPTORS = ("degree", "log_degree", "clustering", "graph_size")
COS_EPS = 1e-12


class ProbeError(ValueError):
    pass


def probe_inputs(g: Graph, spec: RandomFeatureSpec = RandomFeatureSpec()) -> np.ndarray:
    """Handcrafted node descriptors followed by the random node features."""
    a = g.adjacency()
    deg = a.sum(axis=1)
    closed = ((a @ a) * a).sum(axis=1) / 2.0
    pairs = deg * (deg - 1) / 2.0
    clustering = np.divide(closed, pairs, out=np.zeros_like(closed), where=pairs > 0)
    hand = np.column_stack([deg, np.log1p(deg), clustering, np.full(g.num_nodes, float(g.num_nodes))])
    return np.hstack([hand, inject_random_features(g, spec)])


def _check_layout(target: np.ndarray, layout) -> None:
    if not layout or layout[0][1] != 0 or layout[-1][2] != target.shape[1]:
        raise ProbeError("layout does not cover the target columns")
    for (_, _, stop), (_, start, _) in zip(layout[:-1], layout[1:]):
        if stop != start:
            raise ProbeError("layout spans must be contiguous")


class PreparedTargets:
    """Target-side quantities of the loss, computed once per training run."""

    def __init__(self, target: np.ndarray, layout):
        target = np.asarray(target, dtype=np.float64)
        if target.ndim != 2:
            raise ProbeError(f"targets must be 2-D, got shape {target.shape}")
        _check_layout(target, layout)
        self.target = target
        self.layout = [tuple(s) for s in layout]
        self.names = [name for name, _, _ in self.layout]
        self.starts = np.array([a for _, a, _ in self.layout])
        self.widths = np.array([b - a for _, a, b in self.layout])
        tn = np.sqrt(np.add.reduceat(target * target, self.starts, axis=1))
        self.live = tn > 0                                  # (n, groups)
        inv = np.divide(1.0, tn, out=np.zeros_like(tn), where=self.live)
        self.unit = target * np.repeat(inv, self.widths, axis=1)


def mae_cosine_loss(pred: np.ndarray, target, layout=None) -> tuple[float, np.ndarray, dict]:
    """Return ``(loss, d loss / d pred, per-group loss)``.

    MAE is averaged over every entry; the cosine term ``1 - cos(pred_g, target_g)``
    is averaged over (group, node) pairs, counting all-zero targets as 0.
    ``target`` may be a ``PreparedTargets`` (then ``layout`` is ignored).
    """
    prep = target if isinstance(target, PreparedTargets) else PreparedTargets(target, layout)
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != prep.target.shape:
        raise ProbeError(f"shape mismatch: pred {pred.shape} vs target {prep.target.shape}")
    n = pred.shape[0]
    size = max(pred.size, 1)
    n_terms = max(n * len(prep.starts), 1)

    diff = pred - prep.target
    absdiff = np.abs(diff)
    grad = np.sign(diff, out=diff)
    grad *= 1.0 / size

    pnorm = np.sqrt(np.add.reduceat(pred * pred, prep.starts, axis=1))
    dot = np.add.reduceat(pred * prep.unit, prep.starts, axis=1)
    small = pnorm <= COS_EPS
    pn = np.maximum(pnorm, COS_EPS)
    cos = dot / pn
    term = np.where(prep.live, 1.0 - cos, 0.0)
    # d(1 - cos)/dp = -unit/|p| + cos * p/|p|^2  (linear branch below COS_EPS)
    a = np.where(prep.live, 1.0 / pn, 0.0)
    b = np.where(prep.live & ~small, cos / (pn * pn), 0.0)
    grad -= prep.unit * np.repeat(a / n_terms, prep.widths, axis=1)
    grad += pred * np.repeat(b / n_terms, prep.widths, axis=1)

    if n:
        group_mae = np.add.reduceat(absdiff.sum(axis=0), prep.starts) / (n * prep.widths)
        group_cos = term.mean(axis=0)
    else:
        group_mae = group_cos = np.zeros(len(prep.starts))
    per_group = {name: float(m + c) for name, m, c in zip(prep.names, group_mae, group_cos)}
    loss = float(absdiff.sum() / size + term.sum() / n_terms)
    return loss, grad, per_group


@dataclass
class OptimizerState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-5
    base_lr: float = 0.005


def adamw_step(params: dict, grads: dict, state: OptimizerState, lr: float) -> tuple[dict, OptimizerState]:
    """One AdamW update with decoupled weight decay; inputs are not mutated."""
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise ProbeError(f"non-finite gradient for {k!r}")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_params, new_m, new_v = {}, {}, {}
    for k, theta in params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        theta = np.asarray(theta, dtype=np.float64)
        m = b1 * state.m.get(k, np.zeros_like(theta)) + (1 - b1) * g
        v = b2 * state.v.get(k, np.zeros_like(theta)) + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        theta = theta - lr * state.weight_decay * theta
        new_params[k] = theta - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[k], new_v[k] = m, v
    return new_params, replace(state, step=t, m=new_m, v=new_v)


@dataclass
class ScheduleState:
    total_epochs: int = 120
    warmup_epochs: int = 5
    epoch: float = 0

    def __post_init__(self):
        if not 0 <= self.warmup_epochs < self.total_epochs:
            raise ValueError("need 0 <= warmup_epochs < total_epochs")
        if not 0 <= self.epoch <= self.total_epochs:
            raise ValueError("epoch outside [0, total_epochs]")


def cosine_warmup_lr(s: ScheduleState, base_lr: float = 0.005) -> float:
    e, w, total = s.epoch, s.warmup_epochs, s.total_epochs
    if e < w:
        return base_lr * e / w
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * (e - w) / (total - w)))


@dataclass
class ProbeConfig:
    epochs: int = 120
    warmup_epochs: int = 5
    base_lr: float = 0.005
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    random_dim: int = 20


@dataclass
class LinearProbe:
    weight: np.ndarray          # (input_dim, target_dim), acts on standardized inputs
    bias: np.ndarray
    layout: list
    input_mean: np.ndarray
    input_scale: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        return ((x - self.input_mean) / self.input_scale) @ self.weight + self.bias

    def arrays(self) -> dict:
        return {"weight": self.weight, "bias": self.bias,
                "input_mean": self.input_mean, "input_scale": self.input_scale}


def _stack_corpus(corpus):
    xs, ts, layout = [], [], None
    for x, t in corpus:
        if hasattr(t, "layout"):
            lay, mat = t.layout(), t.matrix()
        else:
            mat, lay = t
        lay = [tuple(s) for s in lay]
        if layout is None:
            layout = lay
        elif lay != layout:
            raise ProbeError("inconsistent target layouts across the corpus")
        if len(x) != len(mat):
            raise ProbeError("input and target row counts differ")
        xs.append(np.asarray(x, dtype=np.float64))
        ts.append(np.asarray(mat, dtype=np.float64))
    return np.vstack(xs), np.vstack(ts), layout


def train_probe(corpus, cfg: ProbeConfig = ProbeConfig()) -> tuple[LinearProbe, list[dict]]:
    """Full-batch training over ``corpus``: a list of ``(inputs, targets)``.

    ``targets`` is a ``PseTargets``/``TargetTable`` or a ``(matrix, layout)`` pair.
    Weights start at zero and the bias at the per-column target mean. The
    learning rate for epoch ``e`` (0-based) is the schedule value at ``e``.
    """
    if not corpus:
        raise ProbeError("empty training corpus")
    x, y, layout = _stack_corpus(corpus)
    prep = PreparedTargets(y, layout)
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    xs = (x - mean) / scale
    params = {"weight": np.zeros((x.shape[1], y.shape[1])), "bias": y.mean(axis=0)}
    state = OptimizerState(beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
                           weight_decay=cfg.weight_decay, base_lr=cfg.base_lr)
    warmup = min(cfg.warmup_epochs, cfg.epochs - 1)
    log = []
    for epoch in range(cfg.epochs):
        lr = cosine_warmup_lr(ScheduleState(cfg.epochs, warmup, epoch), cfg.base_lr)
        pred = xs @ params["weight"] + params["bias"]
        loss, gpred, per_group = mae_cosine_loss(pred, prep)
        grads = {"weight": xs.T @ gpred, "bias": gpred.sum(axis=0)}
        params, state = adamw_step(params, grads, state, lr)
        log.append({"epoch": epoch, "lr": lr, "loss": loss, "groups": per_group})
    probe = LinearProbe(weight=params["weight"], bias=params["bias"], layout=layout,
                        input_mean=mean, input_scale=scale)
    return probe, log


def log_to_csv(log: list[dict]) -> str:
    if not log:
        return "epoch,lr,loss\n"
    groups = list(log[0]["groups"])
    lines = [",".join(["epoch", "lr", "loss"] + [f"loss_{g}" for g in groups])]
    for row in log:
        vals = [str(row["epoch"]), repr(row["lr"]), repr(row["loss"])]
        vals += [repr(row["groups"][g]) for g in groups]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"
