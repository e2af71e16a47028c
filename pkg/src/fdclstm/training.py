"""Minibatch sampling and the seeded training loop for one model instance.

Training reads nothing outside the declared training basins and date range:
all arrays handed to the loop are cut to the training window up front, and
window sampling only considers starts whose forcing block is fully observed.
That boundary is what the leakage poisoning test exercises.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from . import tensor as T
from .catalog import (
    QVAR,
    Catalog,
    DailySeries,
    DateRange,
    NormEntry,
    NormStats,
    attribute_vector,
    fit_norm_stats,
)
from .errors import MissingAttribute, NonFiniteLoss, WindowTooLong
from .fdc import Fdc, fit_fdc_stats, normalize_fdc
from .network import (
    FIVE_ATTR,
    FIVE_ATTR_DEFAULT,
    FULL_ATTR,
    NO_ATTR,
    EncoderConfig,
    ModelConfig,
    StreamflowModel,
    forward,
    init_model,
    loss_rmse_masked,
    save_model,
)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_basins: int
    seq_len: int
    lr: float = 1e-3
    seed: int = 0
    selection: str = FULL_ATTR
    use_fdc: bool = True
    hidden_size: int = 64
    dropout: float = 0.4
    clip_norm: float = 1.0
    steps_per_epoch: int | None = None  # default: ceil(train basins / batch)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    five_attributes: tuple[str, ...] = FIVE_ATTR_DEFAULT

    def __post_init__(self):
        if self.epochs < 0 or self.batch_basins < 1 or self.seq_len < 1 or self.lr <= 0:
            raise ValueError("epochs >= 0, batch_basins/seq_len >= 1, lr > 0 required")


def select_attributes(catalog: Catalog, selection: str, five: tuple[str, ...]) -> tuple[str, ...]:
    if selection == FULL_ATTR:
        return catalog.attribute_names
    if selection == NO_ATTR:
        return ()
    if selection == FIVE_ATTR:
        for name in five:
            if name not in catalog.attribute_names:
                raise MissingAttribute("(5-attr selection)", name)
        return tuple(five)
    raise ValueError(f"unknown input selection {selection!r}")


def range_matrix(series: DailySeries, rng: DateRange) -> tuple[np.ndarray, np.ndarray]:
    """(values, mask) over the full range length, padding uncovered days as masked."""
    n = rng.n_days
    values = np.zeros((n, len(series.variables)))
    mask = np.zeros((n, len(series.variables)), dtype=bool)
    lo_day = max(series.start_date, rng.start)
    hi_day = min(series.end_date, rng.end)
    if lo_day <= hi_day:
        src_lo = (lo_day - series.start_date).days
        src_hi = (hi_day - series.start_date).days + 1
        dst_lo = (lo_day - rng.start).days
        values[dst_lo : dst_lo + (src_hi - src_lo)] = series.values[src_lo:src_hi]
        mask[dst_lo : dst_lo + (src_hi - src_lo)] = series.mask[src_lo:src_hi]
    return values, mask


@dataclass
class TrainData:
    """Normalized per-basin arrays restricted to the training window."""

    basin_ids: list[str]
    forcing: dict[str, np.ndarray]  # [R, V] normalized, masked cells zero
    target: dict[str, np.ndarray]  # [R] normalized discharge
    target_mask: dict[str, np.ndarray]  # [R] bool
    attrs: dict[str, np.ndarray]  # [A] selected, normalized
    fdc_norm: dict[str, np.ndarray] | None  # [100] per basin
    valid_starts: dict[str, np.ndarray]  # window starts with complete forcing
    stats: NormStats
    fdc_entry: NormEntry | None
    model_config: ModelConfig
    train_range: DateRange


def build_train_data(
    catalog: Catalog,
    series: dict[str, DailySeries],
    train_basins: list[str],
    train_range: DateRange,
    config: TrainConfig,
    train_fdcs: dict[str, Fdc] | None = None,
) -> TrainData:
    """Normalize and window-index the training slice of every training basin.

    train_fdcs maps training basins to their own FDCs (a model with
    use_fdc=False needs none). Statistics are fitted here, on this data only.
    """
    if config.seq_len > train_range.n_days:
        raise WindowTooLong(f"seq_len {config.seq_len} exceeds training range of {train_range.n_days} days")

    attr_names = select_attributes(catalog, config.selection, config.five_attributes)
    stats = fit_norm_stats(catalog, series, train_basins, train_range, attr_names=attr_names)
    forcing_vars = tuple(v for v in series[train_basins[0]].variables if v != QVAR)

    fdc_entry = None
    fdc_norm = None
    if config.use_fdc:
        fdcs = [train_fdcs[bid] for bid in train_basins]
        fdc_entry = fit_fdc_stats(fdcs)
        fdc_norm = {bid: normalize_fdc(train_fdcs[bid], fdc_entry) for bid in train_basins}

    model_config = ModelConfig(
        forcing_vars=forcing_vars,
        attr_names=attr_names,
        selection=config.selection,
        use_fdc=config.use_fdc,
        hidden_size=config.hidden_size,
        dropout=config.dropout,
        encoder=config.encoder,
    )

    forcing: dict[str, np.ndarray] = {}
    target: dict[str, np.ndarray] = {}
    target_mask: dict[str, np.ndarray] = {}
    attrs: dict[str, np.ndarray] = {}
    valid_starts: dict[str, np.ndarray] = {}
    t = config.seq_len
    for bid in train_basins:
        values, mask = range_matrix(series[bid], train_range)
        cols = [series[bid].var_index(v) for v in forcing_vars]
        qcol = series[bid].var_index(QVAR)
        fmat = np.zeros((values.shape[0], len(cols)))
        for j, (name, col) in enumerate(zip(forcing_vars, cols)):
            obs = mask[:, col]
            fmat[obs, j] = stats.variables[name].normalize(values[obs, col])
        forcing[bid] = fmat
        qm = mask[:, qcol]
        tgt = np.zeros(values.shape[0])
        tgt[qm] = stats.variables[QVAR].normalize(values[qm, qcol])
        target[bid] = tgt
        target_mask[bid] = qm
        attrs[bid] = attribute_vector(catalog[bid], stats, attr_names)

        forcing_ok = mask[:, cols].all(axis=1)
        # a start is valid when all t forcing rows are observed and at least
        # one discharge observation falls inside the window
        ok_run = np.convolve(forcing_ok.astype(np.int64), np.ones(t, dtype=np.int64), "valid") == t
        has_obs = np.convolve(qm.astype(np.int64), np.ones(t, dtype=np.int64), "valid") > 0
        valid_starts[bid] = np.flatnonzero(ok_run & has_obs)

    return TrainData(
        basin_ids=list(train_basins),
        forcing=forcing,
        target=target,
        target_mask=target_mask,
        attrs=attrs,
        fdc_norm=fdc_norm,
        valid_starts=valid_starts,
        stats=stats,
        fdc_entry=fdc_entry,
        model_config=model_config,
        train_range=train_range,
    )


def sample_batch(data: TrainData, config: TrainConfig, gen: np.random.Generator) -> list[tuple[str, int]]:
    """Uniform basins with replacement, uniform valid window start per draw."""
    candidates = [bid for bid in data.basin_ids if data.valid_starts[bid].size > 0]
    if not candidates:
        raise WindowTooLong(
            f"no basin offers a complete {config.seq_len}-day forcing window with observations"
        )
    batch = []
    for _ in range(config.batch_basins):
        bid = candidates[int(gen.integers(len(candidates)))]
        starts = data.valid_starts[bid]
        batch.append((bid, int(starts[int(gen.integers(starts.size))])))
    return batch


def _assemble(data: TrainData, batch: list[tuple[str, int]], t: int):
    nb = len(batch)
    nv = len(data.model_config.forcing_vars)
    forcing = np.empty((nb, t, nv))
    target = np.empty((nb, t))
    mask = np.empty((nb, t), dtype=bool)
    attrs = np.empty((nb, len(data.model_config.attr_names)))
    fdc = np.empty((nb, 100)) if data.fdc_norm is not None else None
    for i, (bid, s) in enumerate(batch):
        forcing[i] = data.forcing[bid][s : s + t]
        target[i] = data.target[bid][s : s + t]
        mask[i] = data.target_mask[bid][s : s + t]
        attrs[i] = data.attrs[bid]
        if fdc is not None:
            fdc[i] = data.fdc_norm[bid]
    return forcing, attrs, fdc, target, mask


def train(
    data: TrainData,
    config: TrainConfig,
    trace_path=None,
    checkpoint_path=None,
) -> tuple[StreamflowModel, list[tuple[int, int, float]]]:
    """Run the seeded loop; returns the model and the (epoch, step, loss) trace.

    Zero epochs returns the freshly initialized model untouched. A non-finite
    loss aborts immediately; gradient clipping at global norm keeps that a
    genuine error rather than routine overflow.
    """
    model = init_model(data.model_config, _rng.derive_seed(config.seed, "model-init"))
    params = model.parameters()
    state = T.AdamState.for_params(params, lr=config.lr)
    steps = config.steps_per_epoch
    if steps is None:
        steps = max(1, math.ceil(len(data.basin_ids) / config.batch_basins))

    trace: list[tuple[int, int, float]] = []
    global_step = 0
    for epoch in range(config.epochs):
        for step in range(steps):
            gen = _rng.generator(config.seed, "batch", epoch, step)
            batch = sample_batch(data, config, gen)
            forcing, attrs, fdc, target, mask = _assemble(data, batch, config.seq_len)
            model.zero_grad()
            pred = forward(
                model,
                forcing,
                attrs,
                fdc,
                training=True,
                dropout_key=(config.seed, epoch, step),
            )
            loss = loss_rmse_masked(pred, target, mask)
            loss_val = loss.item()
            if not math.isfinite(loss_val):
                raise NonFiniteLoss(global_step)
            loss.backward()
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
            T.clip_global_norm(grads, config.clip_norm)
            T.adam_step(params, grads, state)
            trace.append((epoch, step, loss_val))
            global_step += 1

    if trace_path is not None:
        write_trace(trace_path, trace)
    if checkpoint_path is not None:
        extra = {"train_config": train_config_dict(config)}
        if data.fdc_entry is not None:
            extra["fdc_norm"] = [data.fdc_entry.transform, data.fdc_entry.center, data.fdc_entry.scale]
        save_model(checkpoint_path, model, data.stats, extra)
    return model, trace


def train_config_dict(config: TrainConfig) -> dict:
    return {
        "epochs": config.epochs,
        "batch_basins": config.batch_basins,
        "seq_len": config.seq_len,
        "lr": config.lr,
        "seed": config.seed,
        "selection": config.selection,
        "use_fdc": config.use_fdc,
        "hidden_size": config.hidden_size,
        "dropout": config.dropout,
        "clip_norm": config.clip_norm,
        "steps_per_epoch": config.steps_per_epoch,
        "encoder": {
            "layers": [list(l) for l in config.encoder.layers],
            "pool": config.encoder.pool,
            "out_features": config.encoder.out_features,
        },
        "five_attributes": list(config.five_attributes),
    }


def write_trace(path, trace: list[tuple[int, int, float]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "step", "loss"])
        for epoch, step, loss in trace:
            w.writerow([epoch, step, repr(loss)])


def predict(
    model: StreamflowModel,
    stats: NormStats,
    catalog: Catalog,
    series: DailySeries,
    eval_range: DateRange,
    fdc_norm: np.ndarray | None = None,
) -> np.ndarray:
    """Eval-mode hydrograph in mm/day over the range (one stateful pass).

    Missing forcing days are fed the training mean (zero in normalized
    space); discharge observations are never an input.
    """
    cfg = model.config
    values, mask = range_matrix(series, eval_range)
    cols = [series.var_index(v) for v in cfg.forcing_vars]
    fmat = np.zeros((values.shape[0], len(cols)))
    for j, (name, col) in enumerate(zip(cfg.forcing_vars, cols)):
        obs = mask[:, col]
        fmat[obs, j] = stats.variables[name].normalize(values[obs, col])
    attrs = attribute_vector(catalog[series.basin_id], stats, cfg.attr_names).reshape(1, -1)
    fdc_in = None if fdc_norm is None else np.asarray(fdc_norm).reshape(1, -1)
    with T.no_grad():
        pred = forward(model, fmat[None, :, :], attrs, fdc_in, training=False)
    return stats.variables[QVAR].denormalize(pred.data[0])
