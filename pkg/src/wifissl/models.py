"""SIMO-DNN and CNNLoc as multi-head networks over a shared dense encoder."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .nn import Act, Activation, Conv1D, Dense, Dropout, Flatten, Sequential
from .nn.layers import backward, forward
from .nn.losses import LossKind, LossRole, LossSpec, loss
from .nn.optim import AdamState, adam_step
from .nn.params import Parameters
from .preprocess import CoordScale, EncodedBatch
from .rng import Rng

CONV_KERNEL = 22
CONV_FILTERS = (99, 66, 33)
HEAD_WIDTHS = {"bf": 8, "b": 3, "f": 5, "l": 2}


class ModelName(str, enum.Enum):
    SIMO = "simo"
    CNNLOC = "cnnloc"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class HeadSpec:
    name: str  # bf | b | f | l; also the parameter group
    net: Sequential
    pred_loss: LossKind
    cons_loss: LossKind | None
    lr: float

    @property
    def width(self) -> int:
        return HEAD_WIDTHS[self.name]


@dataclass(frozen=True)
class ModelSpec:
    name: ModelName
    input_width: int
    encoder_dims: tuple[int, ...]
    encoder: Sequential
    encoder_lr: float
    heads: tuple[HeadSpec, ...]
    coord_scale: CoordScale
    dropout: float = 0.0

    def head(self, name: str) -> HeadSpec:
        return next(h for h in self.heads if h.name == name)

    def lr(self) -> dict[str, float]:
        return {"encoder": self.encoder_lr, **{h.name: h.lr for h in self.heads}}

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        out = dict(self.encoder.param_shapes())
        for h in self.heads:
            out.update(h.net.param_shapes())
        return out

    def init(self, seed: int) -> Parameters:
        rng = Rng(seed)
        params = self.encoder.init(rng)
        for h in self.heads:
            params = params.merge(h.net.init(rng))
        return params

    def to_dict(self) -> dict:
        return {
            "name": self.name.value,
            "input_width": self.input_width,
            "encoder_dims": list(self.encoder_dims),
            "dropout": self.dropout,
            "coord_scale": self.coord_scale.value,
            "heads": [
                {
                    "name": h.name,
                    "pred_loss": h.pred_loss.value,
                    "cons_loss": h.cons_loss.value if h.cons_loss else None,
                    "lr": h.lr,
                    "layers": [_layer_str(l) for l in h.net.layers],
                }
                for h in self.heads
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _layer_str(layer) -> str:
    if isinstance(layer, Dense):
        return f"dense({layer.in_dim},{layer.out_dim})"
    if isinstance(layer, Conv1D):
        return f"conv1d({layer.in_channels},{layer.out_channels},{layer.kernel})"
    if isinstance(layer, Dropout):
        return f"dropout({layer.rate})"
    if isinstance(layer, Activation):
        return layer.kind.value
    return "flatten"


def from_dict(d: dict) -> ModelSpec:
    name = ModelName(d["name"])
    if name is ModelName.SIMO:
        spec = build_simo(d["input_width"])
    else:
        spec = build_cnnloc(d["input_width"], dropout=d.get("dropout", 0.5))
    if spec.to_dict() != d:
        raise ModelError("serialized model spec does not match this library's builder")
    return spec


def _encoder(w: int) -> tuple[tuple[int, ...], Sequential]:
    dims = (w, w // 2, w // 4)
    layers = []
    for a, b in zip(dims, dims[1:]):
        layers += [Dense(a, b), Activation(Act.ELU)]
    return dims, Sequential("encoder", tuple(layers))


def _mlp(prefix: str, dims, hidden: Act, output: Act) -> Sequential:
    layers = []
    for i, (a, b) in enumerate(zip(dims, dims[1:])):
        last = i == len(dims) - 2
        layers += [Dense(a, b), Activation(output if last else hidden)]
    return Sequential(prefix, tuple(layers))


def build_simo(input_width: int) -> ModelSpec:
    """Dense encoder w -> w/2 -> w/4 (ELU), building/floor head with two
    520-wide ELU layers and sigmoid output, location head with three
    520-wide tanh layers and tanh output."""
    if input_width < 8:
        raise ModelError(f"input width {input_width} too small for SIMO-DNN")
    dims, enc = _encoder(input_width)
    e = dims[-1]
    bf = _mlp("bf", (e, 520, 520, 8), Act.ELU, Act.SIGMOID)
    loc = _mlp("l", (e, 520, 520, 520, 2), Act.TANH, Act.TANH)
    return ModelSpec(
        ModelName.SIMO,
        input_width,
        dims,
        enc,
        1e-4,
        (
            HeadSpec("bf", bf, LossKind.BCE, LossKind.BCE, 1e-4),
            HeadSpec("l", loc, LossKind.MSE, LossKind.MSE, 1e-3),
        ),
        CoordScale.TANH,
    )


def conv_lengths(encoder_out: int) -> list[int]:
    lengths, n = [], encoder_out
    for _ in CONV_FILTERS:
        n = n - CONV_KERNEL + 1
        lengths.append(n)
    return lengths


def _conv_stack(prefix: str, e: int, out_width: int, out_act: Act, dropout: float) -> Sequential:
    layers: list = []
    if dropout > 0:
        layers.append(Dropout(dropout))
    channels = 1
    for filters in CONV_FILTERS:
        layers += [Conv1D(channels, filters, CONV_KERNEL), Activation(Act.ELU)]
        channels = filters
    flat = CONV_FILTERS[-1] * conv_lengths(e)[-1]
    layers += [Flatten(), Dense(flat, out_width), Activation(out_act)]
    return Sequential(prefix, tuple(layers))


def build_cnnloc(input_width: int, dropout: float = 0.5) -> ModelSpec:
    """SAE-style encoder, dense building head, conv floor and location heads.

    The conv heads are sized from the actual encoder output, so the flatten
    width is ``33 * (encoder_out - 63)``.
    """
    dims, enc = _encoder(input_width)
    e = dims[-1]
    if e <= 66:
        raise ModelError(f"encoder output {e} too short for three kernel-{CONV_KERNEL} convolutions")
    b = _mlp("b", (e, e, 3), Act.ELU, Act.SOFTMAX)
    f = _conv_stack("f", e, 5, Act.SOFTMAX, dropout)
    loc = _conv_stack("l", e, 2, Act.LINEAR, 0.0)
    return ModelSpec(
        ModelName.CNNLOC,
        input_width,
        dims,
        enc,
        1e-4,
        (
            HeadSpec("b", b, LossKind.CE, None, 1e-4),
            HeadSpec("f", f, LossKind.CE, LossKind.MSE, 1e-4),
            HeadSpec("l", loc, LossKind.MSE, LossKind.MSE, 1e-4),
        ),
        CoordScale.UNIT,
        dropout,
    )


def build(name: ModelName | str, input_width: int) -> ModelSpec:
    name = ModelName(name)
    return build_simo(input_width) if name is ModelName.SIMO else build_cnnloc(input_width)


# forward / backward ----------------------------------------------------------


def multi_head_forward(spec: ModelSpec, params, x, train: bool = False, rng: Rng | None = None):
    """Encoder once, then every head. Returns ``(outputs, caches)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.input_width:
        raise ModelError(f"batch shape {x.shape} does not match input width {spec.input_width}")
    z, enc_cache = forward(spec.encoder, params, x, train, rng)
    outs, caches = {}, {"encoder": enc_cache}
    for h in spec.heads:
        outs[h.name], caches[h.name] = forward(h.net, params, z, train, rng)
    return outs, caches


def multi_head_backward(spec: ModelSpec, params, caches, head_grads: dict) -> Parameters:
    """Gradients for all tensors given ``dL/d output`` per head (missing = zero)."""
    grads: dict = {}
    g_enc = None
    for h in spec.heads:
        g_out = head_grads.get(h.name)
        if g_out is None:
            grads.update({k: np.zeros(s) for k, s in h.net.param_shapes().items()})
            continue
        g_head, g_in = backward(h.net, params, caches[h.name], g_out)
        grads.update(g_head)
        g_enc = g_in if g_enc is None else g_enc + g_in
    if g_enc is None:
        g_enc = np.zeros((caches["encoder"][0].shape[0], spec.encoder_dims[-1]))
    g_encoder, _ = backward(spec.encoder, params, caches["encoder"], g_enc)
    grads.update(g_encoder)
    return Parameters({k: grads[k] for k in params})


def head_targets(spec: ModelSpec, batch: EncodedBatch) -> dict[str, np.ndarray]:
    bf = batch.bf_targets
    targets = {"bf": bf, "b": bf[:, :3], "f": bf[:, 3:], "l": batch.coord_targets}
    return {h.name: targets[h.name] for h in spec.heads}


def prediction_loss(spec: ModelSpec, outputs: dict, targets: dict):
    """Sum of per-head prediction losses and the per-head output gradients."""
    total, grads = 0.0, {}
    for h in spec.heads:
        v, g = loss(h.pred_loss, outputs[h.name], targets[h.name])
        total += v
        grads[h.name] = g
    return total, grads


def consistency_loss(spec: ModelSpec, student: dict, teacher: dict):
    """Sum over consistency-enabled heads; teacher outputs are constant targets."""
    total, grads = 0.0, {}
    for h in spec.heads:
        if h.cons_loss is None:
            continue
        v, g = loss(LossSpec(h.cons_loss, LossRole.CONSISTENCY), student[h.name], teacher[h.name])
        total += v
        grads[h.name] = g
    return total, grads


def predict(spec: ModelSpec, params, x, batch_size: int = 1024) -> dict[str, np.ndarray]:
    parts = [multi_head_forward(spec, params, x[i : i + batch_size])[0] for i in range(0, len(x), batch_size)]
    return {h.name: np.concatenate([p[h.name] for p in parts]) for h in spec.heads}


def param_count(spec: ModelSpec) -> int:
    return int(sum(np.prod(s) for s in spec.param_shapes().values()))


# stacked-autoencoder pre-training ---------------------------------------------


def build_decoder(spec: ModelSpec) -> Sequential:
    """Mirror of the encoder: ELU hidden layers, linear reconstruction."""
    dims = spec.encoder_dims[::-1]
    return _mlp("decoder", dims, Act.ELU, Act.LINEAR)


def sae_pretrain(
    spec: ModelSpec,
    params: Parameters,
    x: np.ndarray,
    epochs: int,
    seed: int = 0,
    batch_size: int = 32,
    lr: float = 1e-4,
) -> list[float]:
    """Train the encoder in place by MSE reconstruction through a throwaway
    mirror decoder. Returns the full-data reconstruction MSE measured before
    training and after every epoch."""
    decoder = build_decoder(spec)
    rng = Rng(seed)
    enc = params.subset("encoder.")
    ae = enc.merge(decoder.init(rng))
    state = AdamState.for_params(ae)

    def recon_mse() -> float:
        z, _ = forward(spec.encoder, ae, x)
        y, _ = forward(decoder, ae, z)
        return float(np.mean((y - x) ** 2))

    history = [recon_mse()]
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for i in range(0, len(x), batch_size):
            xb = x[order[i : i + batch_size]]
            z, c_enc = forward(spec.encoder, ae, xb, True, rng)
            y, c_dec = forward(decoder, ae, z, True, rng)
            _, g = loss(LossKind.MSE, y, xb)
            g_dec, g_z = backward(decoder, ae, c_dec, g)
            g_enc, _ = backward(spec.encoder, ae, c_enc, g_z)
            adam_step(ae, g_enc.merge(g_dec), state, lr)
        history.append(recon_mse())
    for name in enc:
        params.set(name, ae[name])
    return history
