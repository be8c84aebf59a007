"""Layer composition and temporal unrolling.

A model is a stack of layers ending in a non-spiking linear readout that
produces class logits at every timestep. Unrolling an input sequence yields
per-timestep logits, per-timestep distributions, and the aggregated output
(mean of the distributions over time).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DTYPE, SurrogateSpec, Tensor
from .errors import ContractError, DimensionError, FormatError, ParameterError
from .lif import LifConfig, LifState, reset_state_shape, lif_step


def _init_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    # sqrt(6/fan_in): wide enough that LIF layers spike from the first epoch
    bound = float(np.sqrt(6.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


class Linear:
    kind = "linear"

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.in_features = in_features
        self.out_features = out_features
        self.w = Tensor(_init_uniform(rng, (in_features, out_features), in_features), requires_grad=True)
        self.b = Tensor(np.zeros(out_features, dtype=DTYPE), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.w), self.b)

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def out_shape(self, in_shape):
        if in_shape != (self.in_features,):
            raise DimensionError(f"linear expects ({self.in_features},), got {in_shape}")
        return (self.out_features,)


class Conv2d:
    kind = "conv2d"

    def __init__(self, in_ch, out_ch, kernel, stride, padding, rng: np.random.Generator):
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.padding = kernel, stride, padding
        fan_in = in_ch * kernel * kernel
        self.w = Tensor(_init_uniform(rng, (out_ch, in_ch, kernel, kernel), fan_in), requires_grad=True)
        self.b = Tensor(np.zeros(out_ch, dtype=DTYPE), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding)

    def params(self):
        return [("w", self.w), ("b", self.b)]

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_ch:
            raise DimensionError(f"conv2d expects {self.in_ch} channels, got {c}")
        oh, ow = ad._conv_geometry(h, w, self.kernel, self.kernel, self.stride, self.padding)
        return (self.out_ch, oh, ow)


class AvgPool2d:
    kind = "avgpool2d"

    def __init__(self, window: int):
        self.window = window

    def forward(self, x: Tensor) -> Tensor:
        return ad.avgpool2d(x, self.window)

    def params(self):
        return []

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if h % self.window or w % self.window:
            raise DimensionError(f"pool window {self.window} does not divide {in_shape}")
        return (c, h // self.window, w // self.window)


class Flatten:
    kind = "flatten"

    def forward(self, x: Tensor) -> Tensor:
        return ad.reshape(x, (x.shape[0], -1))

    def params(self):
        return []

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)


class Lif:
    kind = "lif"

    def __init__(self, cfg: LifConfig):
        self.cfg = cfg

    def params(self):
        return []

    def out_shape(self, in_shape):
        return in_shape


@dataclass
class TemporalOutput:
    """Per-timestep logits q [T,B,C], distributions v [T,B,C], aggregate o [B,C]."""

    q: Tensor
    v: Tensor
    o: Tensor


class Model:
    def __init__(self, layers, readout: Linear, surrogate: SurrogateSpec, *,
                 preset: str, input_shape, class_count: int, lif_cfg: LifConfig, seed: int):
        self.layers = layers
        self.readout = readout
        self.surrogate = surrogate
        self.preset = preset
        self.input_shape = tuple(input_shape)
        self.class_count = class_count
        self.lif_cfg = lif_cfg
        self.seed = seed
        # shape inference also validates layer compatibility
        self.lif_shapes = []
        shape = self.input_shape
        for layer in layers:
            shape = layer.out_shape(shape)
            if layer.kind == "lif":
                self.lif_shapes.append(shape)
        self.readout.out_shape(shape)

    def parameters(self):
        out = []
        for i, layer in enumerate(self.layers):
            for name, p in layer.params():
                out.append((f"layer{i}.{name}", p))
        for name, p in self.readout.params():
            out.append((f"readout.{name}", p))
        return out

    @property
    def param_count(self) -> int:
        return sum(p.size for _, p in self.parameters())

    def init_states(self, batch: int):
        return [reset_state_shape((batch,) + s, self.lif_cfg) for s in self.lif_shapes]

    def zero_grad(self):
        for _, p in self.parameters():
            p.zero_grad()


PRESETS = ("mlp-small", "cnn-small")


def build_model(preset: str, input_shape, class_count: int, lif_cfg: LifConfig,
                surrogate: SurrogateSpec, seed: int) -> Model:
    """Construct a named desk-scale architecture with seeded initialization."""
    input_shape = tuple(int(n) for n in input_shape)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x1217])))
    if preset == "mlp-small":
        features = int(np.prod(input_shape))
        layers = [Flatten(), Linear(features, 128, rng), Lif(lif_cfg)]
        readout = Linear(128, class_count, rng)
    elif preset == "cnn-small":
        if len(input_shape) != 3:
            raise ParameterError(f"cnn-small needs [C,H,W] inputs, got {input_shape}")
        c, h, w = input_shape
        layers = [
            Conv2d(c, 16, 3, 1, 1, rng), Lif(lif_cfg), AvgPool2d(2),
            Conv2d(16, 32, 3, 1, 1, rng), Lif(lif_cfg), AvgPool2d(2),
            Flatten(),
        ]
        readout = Linear(32 * (h // 4) * (w // 4), class_count, rng)
    else:
        raise ParameterError(f"unknown preset {preset!r}; available: {PRESETS}")
    return Model(layers, readout, surrogate, preset=preset, input_shape=input_shape,
                 class_count=class_count, lif_cfg=lif_cfg, seed=seed)


def forward_timestep(model: Model, x_t: Tensor, states: list[LifState]):
    """One pass through all layers; returns readout logits and advanced states."""
    if len(states) != len(model.lif_shapes):
        raise ContractError(
            f"expected {len(model.lif_shapes)} LIF states, got {len(states)}"
        )
    new_states = []
    si = 0
    h = x_t if isinstance(x_t, Tensor) else Tensor(x_t)
    for layer in model.layers:
        if layer.kind == "lif":
            state = states[si]
            if state.v.shape != h.shape:
                raise ContractError(
                    f"LIF state shape {state.v.shape} does not match activation {h.shape}"
                )
            state, h = lif_step(state, h, layer.cfg, model.surrogate)
            new_states.append(state)
            si += 1
        else:
            h = layer.forward(h)
    return model.readout.forward(h), new_states


def unroll(model: Model, inputs) -> TemporalOutput:
    """Run the full sequence [T,B,...] from fresh states; gradients flow end to end."""
    data = inputs.data if isinstance(inputs, Tensor) else np.asarray(inputs, dtype=DTYPE)
    t_len = data.shape[0]
    if t_len < 1:
        raise ParameterError("unroll needs at least one timestep")
    states = model.init_states(data.shape[1])
    logits = []
    for t in range(t_len):
        q_t, states = forward_timestep(model, Tensor(data[t]), states)
        logits.append(q_t)
    q = ad.stack(logits)
    v = ad.softmax_temperature(q, 1.0)
    o = ad.mean(v, axis=0)
    return TemporalOutput(q=q, v=v, o=o)


def encode_static(image: np.ndarray, t_len: int) -> np.ndarray:
    """Constant-current encoding: repeat the image T times along a new lead axis."""
    if t_len < 1:
        raise ParameterError("encode_static needs T >= 1")
    image = np.asarray(image, dtype=DTYPE)
    return np.repeat(image[None], t_len, axis=0)


# ---------------------------------------------------------------------------
# checkpoint container: versioned JSON header + raw little-endian f32 blobs

CKPT_MAGIC = b"TKSN"
CKPT_VERSION = 1


def save_checkpoint(path, model: Model, *, epoch: int = 0, optimizer=None) -> None:
    params = model.parameters()
    header = {
        "version": CKPT_VERSION,
        "preset": model.preset,
        "input_shape": list(model.input_shape),
        "class_count": model.class_count,
        "layer_shapes": {name: list(p.shape) for name, p in params},
        "lif": {"tau_m": model.lif_cfg.tau_m, "v_th": model.lif_cfg.v_th,
                "v_rest": model.lif_cfg.v_rest, "detach_reset": model.lif_cfg.detach_reset},
        "surrogate": {"kind": model.surrogate.kind, "width": model.surrogate.width},
        "seed": model.seed,
        "epoch": epoch,
        "has_optimizer": optimizer is not None,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<II", CKPT_VERSION, len(blob)))
        f.write(blob)
        for _, p in params:
            f.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
        if optimizer is not None:
            f.write(struct.pack("<Q", optimizer.step_count))
            for arr in optimizer.moment_blobs():
                f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Rebuild the model (and optimizer moments, if stored) from a checkpoint.

    Returns (model, header_dict, optimizer_state or None) where optimizer_state
    is (step_count, [moment arrays in parameter order: m0, v0, m1, v1, ...]).
    """
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic at byte 0")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    model = build_model(
        header["preset"], header["input_shape"], header["class_count"],
        LifConfig(**header["lif"]), SurrogateSpec(**header["surrogate"]), header["seed"],
    )
    off = 12 + hlen
    for name, p in model.parameters():
        shape = tuple(header["layer_shapes"][name])
        if shape != p.shape:
            raise FormatError(f"{path}: shape mismatch for {name}: {shape} vs {p.shape}")
        nbytes = int(np.prod(shape)) * 4
        if off + nbytes > len(raw):
            raise FormatError(f"{path}: truncated at byte {off}")
        p.data = np.frombuffer(raw[off : off + nbytes], dtype="<f4").reshape(shape).copy()
        off += nbytes
    opt_state = None
    if header.get("has_optimizer"):
        (step_count,) = struct.unpack("<Q", raw[off : off + 8])
        off += 8
        moments = []
        for _, p in model.parameters():
            for _ in range(2):
                nbytes = p.size * 4
                moments.append(np.frombuffer(raw[off : off + nbytes], dtype="<f4").reshape(p.shape).copy())
                off += nbytes
        opt_state = (step_count, moments)
    return model, header, opt_state
