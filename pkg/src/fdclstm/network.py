"""The encoder-LSTM streamflow model.

A small 1-D convolutional encoder maps a basin's normalized 100-point flow
duration curve to a feature vector x'. That vector and the normalized static
attributes are tiled across time and concatenated with the normalized daily
forcings, then an LSTM with a linear head predicts normalized discharge at
every step. Dropout hits the LSTM input and the hidden state before the head,
training mode only, with counter-based masks so runs replay exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from . import tensor as T
from .catalog import NormStats
from .errors import AllMasked, ShapeMismatch
from .fdc import N_POINTS

FULL_ATTR = "full-attr"
FIVE_ATTR = "5-attr"
NO_ATTR = "no-attr"
SELECTIONS = (FULL_ATTR, FIVE_ATTR, NO_ATTR)

# canonical 5-attribute selection; configs remap these to file columns
FIVE_ATTR_DEFAULT = (
    "slope_mean",
    "area_gages2",
    "frac_forest",
    "soil_porosity",
    "max_water_content",
)


@dataclass(frozen=True)
class EncoderConfig:
    """Conv stack applied to the 100-point FDC: relu after each conv, then
    optional max-pool, flatten, and a linear layer down to out_features."""

    layers: tuple[tuple[int, int, int, int], ...] = ((8, 5, 1, 0), (16, 5, 1, 0))  # (out_ch, k, stride, pad)
    pool: int = 2  # 0 disables pooling
    out_features: int = 20

    def output_lengths(self, length: int = N_POINTS) -> list[tuple[int, int]]:
        """(channels, length) after each conv+pool stage; validates the stack."""
        c, length_ = 1, length
        stages = []
        for out_ch, k, stride, pad in self.layers:
            if length_ + 2 * pad < k:
                raise ShapeMismatch(f"encoder stage kernel {k} exceeds input length {length_}")
            length_ = (length_ + 2 * pad - k) // stride + 1
            if self.pool:
                length_ //= self.pool
            if length_ < 1:
                raise ShapeMismatch("encoder stack collapses the FDC to length 0")
            c = out_ch
            stages.append((c, length_))
        return stages

    @property
    def flat_dim(self) -> int:
        c, length = self.output_lengths()[-1]
        return c * length


@dataclass(frozen=True)
class ModelConfig:
    forcing_vars: tuple[str, ...]
    attr_names: tuple[str, ...]  # selected attributes, in catalog order
    selection: str = FULL_ATTR
    use_fdc: bool = True
    hidden_size: int = 64
    dropout: float = 0.4
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    @property
    def input_width(self) -> int:
        e = self.encoder.out_features if self.use_fdc else 0
        return len(self.forcing_vars) + len(self.attr_names) + e

    def to_dict(self) -> dict:
        return {
            "forcing_vars": list(self.forcing_vars),
            "attr_names": list(self.attr_names),
            "selection": self.selection,
            "use_fdc": self.use_fdc,
            "hidden_size": self.hidden_size,
            "dropout": self.dropout,
            "encoder": {
                "layers": [list(l) for l in self.encoder.layers],
                "pool": self.encoder.pool,
                "out_features": self.encoder.out_features,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        enc = d["encoder"]
        return cls(
            forcing_vars=tuple(d["forcing_vars"]),
            attr_names=tuple(d["attr_names"]),
            selection=d["selection"],
            use_fdc=d["use_fdc"],
            hidden_size=d["hidden_size"],
            dropout=d["dropout"],
            encoder=EncoderConfig(
                layers=tuple(tuple(l) for l in enc["layers"]),
                pool=enc["pool"],
                out_features=enc["out_features"],
            ),
        )


@dataclass
class StreamflowModel:
    config: ModelConfig
    params: dict[str, T.Tensor]

    def parameters(self) -> list[T.Tensor]:
        return [self.params[k] for k in sorted(self.params)]

    def param_names(self) -> list[str]:
        return sorted(self.params)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


def _uniform(gen, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return gen.uniform(-bound, bound, size=shape)


def init_model(config: ModelConfig, seed: int) -> StreamflowModel:
    """Uniform +-1/sqrt(fan_in) init; forget-gate bias starts at +1."""
    gen = _rng.generator(seed, "init", config.selection, config.use_fdc)
    params: dict[str, np.ndarray] = {}

    if config.use_fdc:
        c_in = 1
        for i, (out_ch, k, _, _) in enumerate(config.encoder.layers):
            params[f"enc.conv{i}.w"] = _uniform(gen, (out_ch, c_in, k), c_in * k)
            params[f"enc.conv{i}.b"] = _uniform(gen, (out_ch,), c_in * k)
            c_in = out_ch
        flat = config.encoder.flat_dim
        params["enc.out.w"] = _uniform(gen, (flat, config.encoder.out_features), flat)
        params["enc.out.b"] = _uniform(gen, (config.encoder.out_features,), flat)

    d, h = config.input_width, config.hidden_size
    params["lstm.wx"] = _uniform(gen, (d, 4 * h), d)
    params["lstm.wh"] = _uniform(gen, (h, 4 * h), h)
    b = _uniform(gen, (4 * h,), h)
    b[h : 2 * h] += 1.0  # forget gate open at init
    params["lstm.b"] = b
    params["head.w"] = _uniform(gen, (h, 1), h)
    params["head.b"] = _uniform(gen, (1,), h)

    return StreamflowModel(config=config, params={k: T.Tensor(v, requires_grad=True) for k, v in params.items()})


def encode(model: StreamflowModel, fdc_norm: np.ndarray) -> T.Tensor:
    """x' = encoder(normalized FDC); input shape [100], output shape [1, E]."""
    fdc_norm = np.asarray(fdc_norm, dtype=np.float64)
    if fdc_norm.shape != (N_POINTS,):
        raise ShapeMismatch(f"encoder input must be [{N_POINTS}], got {fdc_norm.shape}")
    x = T.Tensor(fdc_norm.reshape(1, N_POINTS))
    for i in range(len(model.config.encoder.layers)):
        _, _, stride, pad = model.config.encoder.layers[i]
        x = T.conv1d(x, model.params[f"enc.conv{i}.w"], model.params[f"enc.conv{i}.b"], stride, pad)
        x = x.relu()
        if model.config.encoder.pool:
            x = T.maxpool1d(x, model.config.encoder.pool)
    x = x.reshape((1, model.config.encoder.flat_dim))
    return T.matmul(x, model.params["enc.out.w"]) + model.params["enc.out.b"]


def encode_features(model: StreamflowModel, fdc_norm: np.ndarray) -> np.ndarray:
    """Eval-mode encoder features as a plain [E] array."""
    with T.no_grad():
        return encode(model, fdc_norm).data.reshape(-1)


def forward(
    model: StreamflowModel,
    forcing: np.ndarray,
    attrs: np.ndarray,
    fdc_norm: np.ndarray | None = None,
    training: bool = False,
    dropout_key: tuple = (),
) -> T.Tensor:
    """Predicted discharge in normalized space, shape [B, t].

    forcing is [B, t, V], attrs [B, A] (A may be 0), fdc_norm [B, 100] and
    required when the model uses FDCs. Static inputs are tiled across steps.
    """
    cfg = model.config
    forcing = np.asarray(forcing, dtype=np.float64)
    attrs = np.asarray(attrs, dtype=np.float64)
    if forcing.ndim != 3 or forcing.shape[2] != len(cfg.forcing_vars):
        raise ShapeMismatch(f"forcing must be [B, t, {len(cfg.forcing_vars)}], got {forcing.shape}")
    nb, nt = forcing.shape[:2]
    if attrs.ndim != 2 or attrs.shape != (nb, len(cfg.attr_names)):
        raise ShapeMismatch(f"attrs must be [{nb}, {len(cfg.attr_names)}], got {attrs.shape}")

    if cfg.use_fdc:
        if fdc_norm is None:
            raise ShapeMismatch("model uses FDCs but none were given")
        fdc_norm = np.asarray(fdc_norm, dtype=np.float64)
        if fdc_norm.shape != (nb, N_POINTS):
            raise ShapeMismatch(f"fdc_norm must be [{nb}, {N_POINTS}], got {fdc_norm.shape}")
        features = T.concat([encode(model, fdc_norm[i]) for i in range(nb)], axis=0)
    else:
        features = None

    hsz = cfg.hidden_size
    wx, wh, b = model.params["lstm.wx"], model.params["lstm.wh"], model.params["lstm.b"]
    bias = b.reshape((1, 4 * hsz))
    h = T.Tensor(np.zeros((nb, hsz)))
    c = T.Tensor(np.zeros((nb, hsz)))
    attr_t = T.Tensor(attrs) if attrs.shape[1] else None

    outputs = []
    for t_step in range(nt):
        parts = [T.Tensor(forcing[:, t_step, :])]
        if attr_t is not None:
            parts.append(attr_t)
        if features is not None:
            parts.append(features)
        x = T.concat(parts, axis=1) if len(parts) > 1 else parts[0]
        if training and cfg.dropout > 0.0:
            x = T.dropout(x, cfg.dropout, (*dropout_key, "in", t_step))
        z = T.matmul(x, wx) + T.matmul(h, wh) + bias
        i_g = T.slice_axis(z, 1, 0, hsz).sigmoid()
        f_g = T.slice_axis(z, 1, hsz, 2 * hsz).sigmoid()
        g_g = T.slice_axis(z, 1, 2 * hsz, 3 * hsz).tanh()
        o_g = T.slice_axis(z, 1, 3 * hsz, 4 * hsz).sigmoid()
        c = f_g * c + i_g * g_g
        h = o_g * c.tanh()
        h_out = h
        if training and cfg.dropout > 0.0:
            h_out = T.dropout(h_out, cfg.dropout, (*dropout_key, "h", t_step))
        outputs.append(T.matmul(h_out, model.params["head.w"]) + model.params["head.b"])
    return T.concat(outputs, axis=1)


def loss_rmse_masked(pred: T.Tensor, target: np.ndarray, mask: np.ndarray) -> T.Tensor:
    """Mean over windows of per-window RMSE on unmasked entries.

    Windows with no unmasked entry are excluded; if every window is fully
    masked there is nothing to fit and AllMasked is raised.
    """
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if target.ndim == 1:
        target = target.reshape(1, -1)
        mask = mask.reshape(1, -1)
    if pred.data.ndim == 1:
        pred = pred.reshape((1, pred.data.size))
    if pred.data.shape != target.shape or target.shape != mask.shape:
        raise ShapeMismatch(f"pred {pred.data.shape}, target {target.shape}, mask {mask.shape} disagree")

    # masked target cells may hold arbitrary garbage; zero them under the mask
    # so they cannot reach the loss
    safe_target = np.where(mask, target, 0.0)
    diff = (pred - T.Tensor(safe_target)) * T.Tensor(mask.astype(np.float64))
    sq = diff * diff
    per_window = []
    for w in range(target.shape[0]):
        n_obs = int(mask[w].sum())
        if n_obs == 0:
            continue
        row = T.slice_axis(sq, 0, w, w + 1).sum()
        per_window.append((row * (1.0 / n_obs)).sqrt())
    if not per_window:
        raise AllMasked("every window in the batch is fully masked")
    total = per_window[0]
    for term in per_window[1:]:
        total = total + term
    return total * (1.0 / len(per_window))


def save_model(path, model: StreamflowModel, norm_stats: NormStats, extra: dict | None = None) -> None:
    manifest = {
        "kind": "streamflow-model",
        "model_config": model.config.to_dict(),
        "norm_stats": norm_stats.to_dict(),
    }
    if extra:
        manifest.update(extra)
    T.save_checkpoint(path, model.params, manifest)


def load_model(path) -> tuple[StreamflowModel, NormStats, dict]:
    arrays, manifest = T.load_checkpoint(path)
    config = ModelConfig.from_dict(manifest["model_config"])
    params = {k: T.Tensor(v, requires_grad=True) for k, v in arrays.items()}
    stats = NormStats.from_dict(manifest["norm_stats"])
    return StreamflowModel(config=config, params=params), stats, manifest
