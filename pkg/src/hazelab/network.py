"""
Generator and discriminator networks.

Generator layer table (C_s = base_channels * 2**s, B = blocks_per_scale,
S = scales, K = bottleneck_blocks):

    enc_in             conv 3x3, 3 -> C_0, ReLU
    enc{s}.block{b}    residual block at C_s                     s < S, b < B
    down{s}            conv 3x3 stride 2, C_s -> C_{s+1}, ReLU   s < S-1
    bottleneck         dwt2, pack 4 bands (C -> 4C), K residual blocks at 4C,
                       1x1 projection (identity init), unpack, iwt2
                       (plain residual blocks at C_{S-1} when the DWT is off)
    dec{S-1}.block{b}  residual block at C_{S-1}
    up{s}              transposed conv 2x2 stride 2, C_{s+1} -> C_s, ReLU,
                       then summation skip from enc{s}                s < S-1
    dec{s}.block{b}    residual block at C_s
    out                conv 3x3, C_0 -> 3, no activation, zero init
    output             input + out(...)

A residual block is conv 3x3 -> ReLU -> conv 3x3 -> add, without
normalization. This is a reconstruction; the channel table is not published.

Discriminator: ``blocks`` x (conv 4x4 stride 2 pad 1 without bias ->
instance_norm -> ReLU), global average, 1x1 head with bias, sigmoid.
"""

from collections import OrderedDict
from typing import Dict, Iterator, List, Tuple, Union

import numpy as np

from ._validation import ShapeError
from .functional import conv2d, conv_transpose2d, instance_norm, relu
from .models import DiscriminatorConfig, GeneratorConfig
from .tensor import Tensor4, add, clamp, no_grad, reduce_mean, sigmoid
from .wavelet import WaveletBands, dwt2, iwt2

ConfigT = Union[GeneratorConfig, DiscriminatorConfig]


class ParamStore:
    """Ordered, named collection of learnable tensors."""

    def __init__(self, config: ConfigT, tensors: "OrderedDict[str, Tensor4]"):
        self.config = config
        self._tensors = tensors

    def __getitem__(self, name: str) -> Tensor4:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[Tuple[str, Tensor4]]:
        return iter(self._tensors.items())

    def __len__(self) -> int:
        return len(self._tensors)

    @property
    def names(self) -> List[str]:
        return list(self._tensors)

    def tensors(self) -> List[Tensor4]:
        return list(self._tensors.values())

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: t.shape for name, t in self._tensors.items()}

    def count(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def flat(self) -> np.ndarray:
        """All parameters as one vector, in name order."""
        return np.concatenate([t.data.ravel() for t in self._tensors.values()])

    def load_flat(self, vector: np.ndarray) -> None:
        if vector.size != self.count():
            raise ShapeError(f"flat vector has {vector.size} values, parameters need {self.count()}")
        offset = 0
        for t in self._tensors.values():
            t.data = vector[offset : offset + t.size].reshape(t.shape).astype(np.float64)
            offset += t.size

    def groups(self) -> Dict[str, List[str]]:
        """Parameter names grouped by layer (name without the weight/bias suffix)."""
        grouped: Dict[str, List[str]] = OrderedDict()
        for name in self._tensors:
            grouped.setdefault(name.rsplit(".", 1)[0], []).append(name)
        return grouped

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def copy(self) -> "ParamStore":
        tensors = OrderedDict((name, Tensor4(t.data.copy(), requires_grad=True, name=name)) for name, t in self)
        return type(self)(self.config, tensors)


class GeneratorParams(ParamStore):
    config: GeneratorConfig


class DiscriminatorParams(ParamStore):
    config: DiscriminatorConfig


# ---------------------------------------------------------------------------
# Layer tables
# ---------------------------------------------------------------------------


def _conv(o: int, i: int, k: int, bias: bool = True) -> List[Tuple[str, Tuple[int, ...]]]:
    shapes = [("weight", (o, i, k, k))]
    if bias:
        shapes.append(("bias", (1, o, 1, 1)))
    return shapes


def _block(prefix: str, width: int) -> List[Tuple[str, Tuple[int, ...]]]:
    layers = []
    for conv in ("conv1", "conv2"):
        layers += [(f"{prefix}.{conv}.{suffix}", shape) for suffix, shape in _conv(width, width, 3)]
    return layers


def generator_layer_table(config: GeneratorConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    """(name, shape) of every generator parameter in forward order."""
    widths = config.widths
    inner = widths[-1]
    table = [(f"enc_in.{s}", shape) for s, shape in _conv(widths[0], config.input_channels, 3)]
    for s, width in enumerate(widths):
        for b in range(config.blocks_per_scale):
            table += _block(f"enc{s}.block{b}", width)
        if s < config.scales - 1:
            table += [(f"down{s}.{k}", shape) for k, shape in _conv(widths[s + 1], width, 3)]

    bottleneck_width = 4 * inner if config.enable_dwt_bottleneck else inner
    for b in range(config.bottleneck_blocks):
        table += _block(f"bottleneck.block{b}", bottleneck_width)
    if config.enable_dwt_bottleneck:
        table += [(f"bottleneck.proj.{k}", shape) for k, shape in _conv(bottleneck_width, bottleneck_width, 1)]

    for s in reversed(range(config.scales)):
        if s < config.scales - 1:
            # transposed kernels are laid out (in, out, kh, kw)
            table += [(f"up{s}.weight", (widths[s + 1], widths[s], 2, 2)), (f"up{s}.bias", (1, widths[s], 1, 1))]
        for b in range(config.blocks_per_scale):
            table += _block(f"dec{s}.block{b}", widths[s])
    table += [(f"out.{s}", shape) for s, shape in _conv(config.output_channels, widths[0], 3)]
    return table


def discriminator_layer_table(config: DiscriminatorConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    table = []
    channels = config.input_channels
    for i in range(config.blocks):
        width = config.base_channels * 2**i
        table.append((f"block{i}.weight", (width, channels, 4, 4)))
        channels = width
    table += [("head.weight", (1, channels, 1, 1)), ("head.bias", (1, 1, 1, 1))]
    return table


def _fan_in(name: str, table: Dict[str, Tuple[int, ...]]) -> int:
    # dimension 1 is the input width for convs and the output width for transposed convs
    weight = table[name.rsplit(".", 1)[0] + ".weight"]
    return weight[1] * weight[2] * weight[3]


def _initialize(table: List[Tuple[str, Tuple[int, ...]]], seed: int) -> "OrderedDict[str, Tensor4]":
    """Fan-in scaled uniform U(-1/sqrt(fan_in), 1/sqrt(fan_in)), drawn in table order."""
    rng = np.random.Generator(np.random.PCG64(seed))
    shapes = dict(table)
    tensors: "OrderedDict[str, Tensor4]" = OrderedDict()
    for name, shape in table:
        bound = 1.0 / np.sqrt(_fan_in(name, shapes))
        tensors[name] = Tensor4(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)
    return tensors


def build_generator(config: GeneratorConfig, seed: int, zero_init_output: bool = True) -> GeneratorParams:
    """Deterministic generator weights.

    The output conv starts at zero so the untrained generator is the identity,
    and the bottleneck projection starts as the identity matrix.
    """
    tensors = _initialize(generator_layer_table(config), seed)
    if zero_init_output:
        tensors["out.weight"].data[...] = 0.0
        tensors["out.bias"].data[...] = 0.0
    if config.enable_dwt_bottleneck:
        width = tensors["bottleneck.proj.weight"].shape[0]
        tensors["bottleneck.proj.weight"].data[...] = np.eye(width).reshape(width, width, 1, 1)
        tensors["bottleneck.proj.bias"].data[...] = 0.0
    return GeneratorParams(config, tensors)


def build_discriminator(config: DiscriminatorConfig, seed: int) -> DiscriminatorParams:
    tensors = _initialize(discriminator_layer_table(config), seed)
    tensors["head.bias"].data[...] = 0.0
    return DiscriminatorParams(config, tensors)


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------


def _conv_layer(params: ParamStore, prefix: str, x: Tensor4, stride: int = 1, padding: int = 1) -> Tensor4:
    return conv2d(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"], stride=stride, padding=padding)


def residual_block(params: ParamStore, prefix: str, x: Tensor4) -> Tensor4:
    hidden = relu(_conv_layer(params, f"{prefix}.conv1", x))
    return add(x, _conv_layer(params, f"{prefix}.conv2", hidden))


def bottleneck_forward(params: GeneratorParams, features: Tensor4) -> Tensor4:
    """Innermost-scale processing; wavelet domain when the DWT switch is on."""
    config = params.config
    if not config.enable_dwt_bottleneck:
        for b in range(config.bottleneck_blocks):
            features = residual_block(params, f"bottleneck.block{b}", features)
        return features

    packed = dwt2(features, orthonormal=config.orthonormal_wavelet).pack()
    for b in range(config.bottleneck_blocks):
        packed = residual_block(params, f"bottleneck.block{b}", packed)
    packed = _conv_layer(params, "bottleneck.proj", packed, padding=0)
    return iwt2(WaveletBands.unpack(packed), orthonormal=config.orthonormal_wavelet)


def generator_forward(params: GeneratorParams, hazy: Tensor4, clamp_output: bool = False) -> Tensor4:
    """Dehaze a [-1, 1] batch; the network predicts a residual added to the input."""
    config = params.config
    n, c, h, w = hazy.shape
    if c != config.input_channels:
        raise ShapeError(f"generator expects {config.input_channels} channels, got input {hazy.shape}")
    divisor = config.size_divisor
    if h % divisor or w % divisor:
        raise ShapeError(
            f"generator input {h}x{w} is not divisible by {divisor}",
            suggestion=f"Crop or pad images to a multiple of {divisor} pixels",
        )

    x = relu(_conv_layer(params, "enc_in", hazy))
    skips = []
    for s in range(config.scales):
        for b in range(config.blocks_per_scale):
            x = residual_block(params, f"enc{s}.block{b}", x)
        if s < config.scales - 1:
            skips.append(x)
            x = relu(_conv_layer(params, f"down{s}", x, stride=2))

    x = bottleneck_forward(params, x)

    for s in reversed(range(config.scales)):
        if s < config.scales - 1:
            up = relu(conv_transpose2d(x, params[f"up{s}.weight"], params[f"up{s}.bias"], stride=2))
            x = add(up, skips[s])
        for b in range(config.blocks_per_scale):
            x = residual_block(params, f"dec{s}.block{b}", x)

    residual = _conv_layer(params, "out", x)
    out = add(hazy, residual)
    return clamp(out, -1.0, 1.0) if clamp_output else out


def generator_inference(params: GeneratorParams, hazy: Tensor4) -> Tensor4:
    """Forward without recording, clamped to [-1, 1]."""
    with no_grad():
        return generator_forward(params, hazy, clamp_output=True)


def discriminator_forward(params: DiscriminatorParams, image: Tensor4) -> Tensor4:
    """Per-sample probability of being a clear image, shape (n, 1, 1, 1)."""
    config = params.config
    expected = (config.input_channels, config.input_size, config.input_size)
    if image.shape[1:] != expected:
        raise ShapeError(f"discriminator expects (n, {expected[0]}, {expected[1]}, {expected[2]}) images, got {image.shape}")
    x = image
    for i in range(config.blocks):
        x = relu(instance_norm(conv2d(x, params[f"block{i}.weight"], stride=2, padding=1)))
    pooled = reduce_mean(x, (2, 3))
    return sigmoid(conv2d(pooled, params["head.weight"], params["head.bias"]))


def parameter_count(config: Union[GeneratorConfig, DiscriminatorConfig]) -> int:
    """Closed-form parameter count from the layer table."""
    table = generator_layer_table(config) if isinstance(config, GeneratorConfig) else discriminator_layer_table(config)
    return int(sum(np.prod(shape) for _, shape in table))
