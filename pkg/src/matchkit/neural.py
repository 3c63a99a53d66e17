"""From-scratch two-branch regressor: dense path + LSTM path, summed.

The dense branch reads the last time step of the input sequence through
affine -> SELU -> (inverted) dropout -> affine.  The recurrent branch runs a
single standard LSTM cell over the whole sequence and maps the final hidden
state through an affine readout.  The scalar prediction is the sum of the two
branch outputs.  Training is full-batch Adam on Huber loss (optionally mixed
with a small MSE term); gradients come from handwritten backprop through
time and are verifiable against central finite differences.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from .dbwp import DbwpSeries
from .ingest import MatchTimeline
from .momentum import MomentumSeries

__all__ = [
    "SELU_ALPHA",
    "SELU_LAMBDA",
    "ADAM_EPS",
    "NetConfig",
    "ParallelNet",
    "TrainReport",
    "NEURAL_VARIANTS",
    "param_specs",
    "param_count",
    "init_net",
    "huber_loss",
    "forward",
    "forward_batch",
    "backward",
    "adam_step",
    "init_adam_state",
    "train_net",
    "build_sequences",
    "assemble_match_features",
    "train_deep_lstm",
    "train_report_to_json",
    "write_loss_csv",
]

SELU_ALPHA = 1.6732632423543772
SELU_LAMBDA = 1.0507009873554805
ADAM_EPS = 1e-8

# Feature-drop variants mirroring the two-column ablation of the regressor.
NEURAL_VARIANTS = ("full", "no_momentum", "no_server")


@dataclass(frozen=True)
class NetConfig:
    input_dim: int
    hidden_dense: int = 32
    hidden_lstm: int = 16
    dropout_rate: float = 0.2
    huber_delta: float = 1.0
    adam_lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    epochs: int = 100
    seq_len: int = 16
    seed: int = 0
    l2_mix: bool = False  # adds 0.05 * MSE to the Huber objective

    def check(self) -> None:
        for name in ("input_dim", "hidden_dense", "hidden_lstm", "epochs", "seq_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.huber_delta <= 0:
            raise ValueError(f"huber_delta must be positive, got {self.huber_delta}")
        if self.adam_lr <= 0:
            raise ValueError(f"adam_lr must be positive, got {self.adam_lr}")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {getattr(self, name)}")


def param_specs(config: NetConfig) -> tuple[tuple[str, tuple[int, ...]], ...]:
    """Ordered (name, shape) pairs for every trainable array."""
    d, hd, hl = config.input_dim, config.hidden_dense, config.hidden_lstm
    specs: list[tuple[str, tuple[int, ...]]] = [
        ("dense_w1", (d, hd)), ("dense_b1", (hd,)),
        ("dense_w2", (hd, 1)), ("dense_b2", (1,)),
    ]
    for gate in ("i", "f", "o", "c"):
        specs.append((f"w{gate}", (d, hl)))
    for gate in ("i", "f", "o", "c"):
        specs.append((f"u{gate}", (hl, hl)))
    for gate in ("i", "f", "o", "c"):
        specs.append((f"b{gate}", (hl,)))
    specs.append(("rw", (hl, 1)))
    specs.append(("rb", (1,)))
    return tuple(specs)


def param_count(config: NetConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in param_specs(config))


@dataclass(eq=False)
class ParallelNet:
    params: dict[str, np.ndarray]
    config: NetConfig

    def copy(self) -> "ParallelNet":
        return ParallelNet({k: v.copy() for k, v in self.params.items()}, self.config)


def init_net(config: NetConfig) -> ParallelNet:
    config.check()
    rng = np.random.default_rng(config.seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_specs(config):
        if len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape)
    return ParallelNet(params, config)


def huber_loss(residual: float, delta: float) -> float:
    """0.5*r^2 inside |r| <= delta, delta*|r| - 0.5*delta^2 outside."""
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    r = abs(residual)
    if r <= delta:
        return 0.5 * r * r
    return delta * r - 0.5 * delta * delta


def _selu(x: np.ndarray) -> np.ndarray:
    # exp only sees the non-positive side, so it cannot overflow
    neg = np.exp(np.minimum(x, 0.0)) - 1.0
    return SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * neg)


def _selu_grad(x: np.ndarray) -> np.ndarray:
    return SELU_LAMBDA * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_batch(net: ParallelNet, x: np.ndarray) -> np.ndarray:
    cfg = net.config
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != cfg.seq_len or x.shape[2] != cfg.input_dim:
        raise ValueError(
            f"batch shape {x.shape} does not match (any, seq_len={cfg.seq_len}, "
            f"input_dim={cfg.input_dim})"
        )
    return x


def _forward_cached(net: ParallelNet, x: np.ndarray, train_mode: bool, seed: int):
    """Batch forward pass keeping every intermediate needed for backprop."""
    p = net.params
    cfg = net.config
    B, T, _ = x.shape

    last = x[:, -1, :]
    a1 = last @ p["dense_w1"] + p["dense_b1"]
    z1 = _selu(a1)
    if train_mode and cfg.dropout_rate > 0.0:
        rng = np.random.default_rng(seed)
        keep = rng.random(z1.shape) >= cfg.dropout_rate
        drop_scale = keep / (1.0 - cfg.dropout_rate)
    else:
        drop_scale = np.ones_like(z1)
    d1 = z1 * drop_scale
    dense_out = d1 @ p["dense_w2"] + p["dense_b2"]  # (B, 1)

    h = np.zeros((B, cfg.hidden_lstm))
    c = np.zeros((B, cfg.hidden_lstm))
    steps = []
    for t in range(T):
        xt = x[:, t, :]
        gi = _sigmoid(xt @ p["wi"] + h @ p["ui"] + p["bi"])
        gf = _sigmoid(xt @ p["wf"] + h @ p["uf"] + p["bf"])
        go = _sigmoid(xt @ p["wo"] + h @ p["uo"] + p["bo"])
        gc = np.tanh(xt @ p["wc"] + h @ p["uc"] + p["bc"])
        c_new = gf * c + gi * gc
        tanh_c = np.tanh(c_new)
        h_new = go * tanh_c
        steps.append((xt, h, c, gi, gf, go, gc, c_new, tanh_c))
        h, c = h_new, c_new
    recurrent_out = h @ p["rw"] + p["rb"]  # (B, 1)

    pred = (dense_out + recurrent_out)[:, 0]
    cache = {"last": last, "a1": a1, "d1": d1, "drop": drop_scale,
             "steps": steps, "h_final": h}
    return pred, cache


def forward_batch(net: ParallelNet, x, train_mode: bool = False, seed: int = 0) -> np.ndarray:
    x = _check_batch(net, x)
    pred, _ = _forward_cached(net, x, train_mode, seed)
    return pred


def forward(net: ParallelNet, sequence, train_mode: bool = False, seed: int = 0) -> float:
    sequence = np.asarray(sequence, dtype=np.float64)
    if sequence.ndim != 2:
        raise ValueError(f"sequence must be 2-D, got shape {sequence.shape}")
    return float(forward_batch(net, sequence[None, :, :], train_mode, seed)[0])


def _loss_terms(pred: np.ndarray, y: np.ndarray, cfg: NetConfig, loss_kind: str):
    """Mean loss and dLoss/dpred for 'huber' (optionally +0.05*MSE) or 'mse'."""
    r = pred - y
    B = r.shape[0]
    if loss_kind == "mse":
        return float(np.mean(r * r)), 2.0 * r / B
    if loss_kind != "huber":
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    delta = cfg.huber_delta
    small = np.abs(r) <= delta
    losses = np.where(small, 0.5 * r * r, delta * np.abs(r) - 0.5 * delta * delta)
    dpred = np.where(small, r, delta * np.sign(r)) / B
    loss = float(np.mean(losses))
    if cfg.l2_mix:
        loss += 0.05 * float(np.mean(r * r))
        dpred = dpred + 0.05 * 2.0 * r / B
    return loss, dpred


def backward(net: ParallelNet, x, y, *, loss_kind: str = "huber",
             train_mode: bool = False, seed: int = 0) -> tuple[float, dict[str, np.ndarray]]:
    """Mean loss over the batch and its gradient for every parameter.

    The dropout mask (train_mode only) is drawn once from `seed`, so the
    returned gradients correspond exactly to the sampled subnetwork.
    """
    x = _check_batch(net, x)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (x.shape[0],):
        raise ValueError(f"targets shape {y.shape} does not match batch {x.shape[0]}")
    p = net.params
    cfg = net.config
    pred, cache = _forward_cached(net, x, train_mode, seed)
    loss, dpred = _loss_terms(pred, y, cfg, loss_kind)
    dout = dpred[:, None]  # (B, 1), gradient on both branch outputs

    grads = {name: np.zeros(shape) for name, shape in param_specs(cfg)}

    # Dense branch.
    grads["dense_w2"] = cache["d1"].T @ dout
    grads["dense_b2"] = dout.sum(axis=0)
    dd1 = dout @ p["dense_w2"].T
    dz1 = dd1 * cache["drop"]
    da1 = dz1 * _selu_grad(cache["a1"])
    grads["dense_w1"] = cache["last"].T @ da1
    grads["dense_b1"] = da1.sum(axis=0)

    # Recurrent branch, backprop through time.
    grads["rw"] = cache["h_final"].T @ dout
    grads["rb"] = dout.sum(axis=0)
    dh = dout @ p["rw"].T
    dc = np.zeros_like(dh)
    for xt, h_prev, c_prev, gi, gf, go, gc, c_new, tanh_c in reversed(cache["steps"]):
        dgo = dh * tanh_c
        dc = dc + dh * go * (1.0 - tanh_c * tanh_c)
        dgi = dc * gc
        dgc = dc * gi
        dgf = dc * c_prev
        dc_prev = dc * gf
        da_i = dgi * gi * (1.0 - gi)
        da_f = dgf * gf * (1.0 - gf)
        da_o = dgo * go * (1.0 - go)
        da_c = dgc * (1.0 - gc * gc)
        grads["wi"] += xt.T @ da_i
        grads["wf"] += xt.T @ da_f
        grads["wo"] += xt.T @ da_o
        grads["wc"] += xt.T @ da_c
        grads["ui"] += h_prev.T @ da_i
        grads["uf"] += h_prev.T @ da_f
        grads["uo"] += h_prev.T @ da_o
        grads["uc"] += h_prev.T @ da_c
        grads["bi"] += da_i.sum(axis=0)
        grads["bf"] += da_f.sum(axis=0)
        grads["bo"] += da_o.sum(axis=0)
        grads["bc"] += da_c.sum(axis=0)
        dh = da_i @ p["ui"].T + da_f @ p["uf"].T + da_o @ p["uo"].T + da_c @ p["uc"].T
        dc = dc_prev
    return loss, grads


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


def init_adam_state(config: NetConfig) -> AdamState:
    return AdamState(
        m={name: np.zeros(shape) for name, shape in param_specs(config)},
        v={name: np.zeros(shape) for name, shape in param_specs(config)},
    )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, t: int, config: NetConfig,
              lr: float | None = None) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    lr = config.adam_lr if lr is None else lr
    b1, b2 = config.adam_beta1, config.adam_beta2
    new_params, new_m, new_v = {}, {}, {}
    for name in params:
        g = grads[name]
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params[name] = params[name] - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(m=new_m, v=new_v)


def train_net(net: ParallelNet, x, y, *, epochs: int | None = None,
              loss_kind: str = "huber", lr: float | None = None,
              train_dropout: bool = True, seed: int | None = None) -> tuple[ParallelNet, tuple[float, ...]]:
    """Full-batch Adam training; returns the trained net and per-epoch losses."""
    cfg = net.config
    epochs = cfg.epochs if epochs is None else epochs
    seed = cfg.seed if seed is None else seed
    params = dict(net.params)
    state = init_adam_state(cfg)
    losses = []
    current = ParallelNet(params, cfg)
    for t in range(1, epochs + 1):
        loss, grads = backward(current, x, y, loss_kind=loss_kind,
                               train_mode=train_dropout, seed=seed + t)
        params, state = adam_step(current.params, grads, state, t, cfg, lr=lr)
        current = ParallelNet(params, cfg)
        losses.append(loss)
    return current, tuple(losses)


def build_sequences(features: np.ndarray, targets: np.ndarray, seq_len: int):
    """Sliding windows of seq_len rows; each window predicts its last target."""
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = features.shape[0]
    if targets.shape != (n,):
        raise ValueError("features and targets disagree on row count")
    if n < seq_len:
        raise ValueError(f"{n} rows cannot form a sequence of length {seq_len}")
    x = np.stack([features[k - seq_len + 1:k + 1] for k in range(seq_len - 1, n)])
    y = targets[seq_len - 1:]
    return x, y


def assemble_match_features(timeline: MatchTimeline, dbwp: DbwpSeries,
                            momentum: MomentumSeries, variant: str = "full"):
    """Per-point feature rows at the fluctuation-score indices, plus targets.

    Full feature order: psychological, strategic, server_signed; the
    `no_momentum` variant keeps only the server column and `no_server` keeps
    only the two momentum columns.
    """
    if variant not in NEURAL_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {NEURAL_VARIANTS}")
    if len(momentum) != len(timeline.points):
        raise ValueError("momentum series is not aligned with the timeline")
    n = len(timeline.points)
    if any(i < 0 or i >= n for i in dbwp.indices):
        raise ValueError("fluctuation series indices fall outside the timeline")
    cols = []
    if variant in ("full", "no_server"):
        cols.append([momentum.psychological[i] for i in dbwp.indices])
        cols.append([momentum.strategic[i] for i in dbwp.indices])
    if variant in ("full", "no_momentum"):
        cols.append([1.0 if timeline.points[i].server == 1 else -1.0 for i in dbwp.indices])
    features = np.column_stack(cols)
    targets = np.asarray(dbwp.dbwp, dtype=np.float64)
    return features, targets


@dataclass(frozen=True)
class TrainReport:
    variant: str
    epoch_losses: tuple[float, ...]
    test_mse: float
    per_repeat_mse: tuple[float, ...]
    config: NetConfig
    seed: int

    def __post_init__(self):
        if any(not np.isfinite(v) or v < 0 for v in self.epoch_losses):
            raise ValueError("epoch losses must be finite and non-negative")
        if not np.isfinite(self.test_mse) or self.test_mse < 0:
            raise ValueError("test MSE must be finite and non-negative")


def _standardize(train: np.ndarray, both: np.ndarray):
    mu = float(train.mean())
    sigma = float(train.std())
    if sigma < 1e-12:
        sigma = 1.0  # constant targets: leave the scale alone
    return (both - mu) / sigma


def train_deep_lstm(matches, config: NetConfig, variant: str = "full",
                    repeats: int = 1) -> TrainReport:
    """Train the two-branch regressor on fluctuation targets.

    `matches` is a sequence of (MatchTimeline, DbwpSeries, MomentumSeries)
    triples (a single triple may be passed bare).  Sequences never cross
    match boundaries; targets are standardized per match with statistics from
    that match's chronological 80% training split; the remaining 20% of
    sequences form the test set.  `config.input_dim` is overridden by the
    variant's column count.  `repeats` > 1 averages the test MSE over seeds
    config.seed .. config.seed+repeats-1.
    """
    config.check()
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    if isinstance(matches, tuple) and len(matches) == 3 and isinstance(matches[0], MatchTimeline):
        matches = [matches]
    xs_train, ys_train, xs_test, ys_test = [], [], [], []
    for timeline, dbwp, momentum in matches:
        features, targets = assemble_match_features(timeline, dbwp, momentum, variant)
        x, y = build_sequences(features, targets, config.seq_len)
        n_train = (4 * x.shape[0]) // 5
        if n_train < 1 or x.shape[0] - n_train < 1:
            raise ValueError(
                f"match {timeline.match_id!r} yields only {x.shape[0]} sequences; "
                "cannot split chronologically"
            )
        y_std = _standardize(y[:n_train], y)
        xs_train.append(x[:n_train])
        ys_train.append(y_std[:n_train])
        xs_test.append(x[n_train:])
        ys_test.append(y_std[n_train:])
    x_train = np.concatenate(xs_train)
    y_train = np.concatenate(ys_train)
    x_test = np.concatenate(xs_test)
    y_test = np.concatenate(ys_test)
    # The variant dictates the feature width, so input_dim is set from it.
    base_cfg = replace(config, input_dim=x_train.shape[2])

    first_losses: tuple[float, ...] = ()
    mses = []
    for j in range(repeats):
        run_cfg = replace(base_cfg, seed=config.seed + j)
        net = init_net(run_cfg)
        net, losses = train_net(net, x_train, y_train)
        if j == 0:
            first_losses = losses
        pred = forward_batch(net, x_test, train_mode=False)
        mses.append(float(np.mean((pred - y_test) ** 2)))
    return TrainReport(
        variant=variant,
        epoch_losses=first_losses,
        test_mse=float(np.mean(mses)),
        per_repeat_mse=tuple(mses),
        config=base_cfg,
        seed=config.seed,
    )


def train_report_to_json(report: TrainReport) -> str:
    doc = asdict(report)
    doc["format_version"] = 1
    return json.dumps(doc, sort_keys=True)


def write_loss_csv(report: TrainReport, dest) -> None:
    if isinstance(dest, str):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            write_loss_csv(report, fh)
            return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(["epoch", "loss"])
    for k, loss in enumerate(report.epoch_losses, start=1):
        writer.writerow([k, repr(loss)])
