"""Layer configurations, architectures, and tensor shape propagation.

Everything here is immutable and pure: shapes are propagated by value and
architectures validate themselves on construction, so a loaded spec is
always fully resolvable.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from enum import Enum

from .errors import ParseError, ShapeError, UnknownPresetError, ValidationError


class LayerKind(str, Enum):
    CONV2D = "Conv2d"
    MAXPOOL2D = "MaxPool2d"
    LINEAR = "Linear"
    RELU = "ReLU"
    SIGMOID = "Sigmoid"
    TANH = "Tanh"
    SOFTMAX = "Softmax"
    ADAPTIVE_AVG_POOL = "AdaptiveAvgPool"
    DROPOUT = "Dropout"
    FLATTEN = "Flatten"


ACTIVATION_KINDS = frozenset(
    {LayerKind.RELU, LayerKind.SIGMOID, LayerKind.TANH, LayerKind.SOFTMAX}
)

#: kinds that carry energy and get a per-type predictor
PREDICTABLE_KINDS = frozenset(
    {LayerKind.CONV2D, LayerKind.MAXPOOL2D, LayerKind.LINEAR} | ACTIVATION_KINDS
)

#: kinds with negligible/no energy, parsed but discarded before prediction
DISCARDED_KINDS = frozenset(
    {LayerKind.ADAPTIVE_AVG_POOL, LayerKind.DROPOUT, LayerKind.FLATTEN}
)

# fields applicable per kind; a standalone (individually measured) config
# must carry all of them
_ALLOWED_FIELDS = {
    LayerKind.CONV2D: frozenset(
        {"batch_size", "image_size", "kernel_size", "in_channels", "out_channels", "stride", "padding"}
    ),
    LayerKind.MAXPOOL2D: frozenset(
        {"batch_size", "image_size", "kernel_size", "in_channels", "stride", "padding"}
    ),
    LayerKind.LINEAR: frozenset({"batch_size", "in_channels", "out_channels"}),
    LayerKind.RELU: frozenset({"batch_size", "in_channels"}),
    LayerKind.SIGMOID: frozenset({"batch_size", "in_channels"}),
    LayerKind.TANH: frozenset({"batch_size", "in_channels"}),
    LayerKind.SOFTMAX: frozenset({"batch_size", "in_channels"}),
    LayerKind.ADAPTIVE_AVG_POOL: frozenset({"output_size"}),
    LayerKind.DROPOUT: frozenset(),
    LayerKind.FLATTEN: frozenset(),
}

# fields that must be present even for layers embedded in an architecture
# (the rest are derivable from the incoming tensor shape)
_REQUIRED_FIELDS = {
    LayerKind.CONV2D: frozenset({"kernel_size", "in_channels", "out_channels", "stride", "padding"}),
    LayerKind.MAXPOOL2D: frozenset({"kernel_size", "stride", "padding"}),
    LayerKind.LINEAR: frozenset({"in_channels", "out_channels"}),
    LayerKind.RELU: frozenset(),
    LayerKind.SIGMOID: frozenset(),
    LayerKind.TANH: frozenset(),
    LayerKind.SOFTMAX: frozenset(),
    LayerKind.ADAPTIVE_AVG_POOL: frozenset({"output_size"}),
    LayerKind.DROPOUT: frozenset(),
    LayerKind.FLATTEN: frozenset(),
}

_CONFIG_FIELDS = (
    "batch_size",
    "image_size",
    "kernel_size",
    "in_channels",
    "out_channels",
    "stride",
    "padding",
    "output_size",
)


@dataclass(frozen=True)
class LayerConfig:
    """Parameters of a single layer.

    A config is either *standalone* (an individually measured module, all
    applicable fields set, including ``batch_size``) or *embedded* in an
    architecture, where ``batch_size``/``image_size`` and, for pooling and
    activations, ``in_channels`` are resolved from the incoming shape.
    For activations ``in_channels`` is the flat input size.
    """

    kind: LayerKind
    batch_size: int | None = None
    image_size: int | None = None
    kernel_size: int | None = None
    in_channels: int | None = None
    out_channels: int | None = None
    stride: int | None = None
    padding: int | None = None
    output_size: int | None = None

    def __post_init__(self):
        if not isinstance(self.kind, LayerKind):
            object.__setattr__(self, "kind", LayerKind(self.kind))
        allowed = _ALLOWED_FIELDS[self.kind]
        for name in _CONFIG_FIELDS:
            value = getattr(self, name)
            if value is None:
                continue
            if name not in allowed:
                raise ValidationError(f"{self.kind.value}: field {name!r} is not applicable")
            if not isinstance(value, int) or isinstance(value, bool):
                raise ValidationError(f"{self.kind.value}: field {name!r} must be an integer")
            minimum = 0 if name == "padding" else 1
            if value < minimum:
                raise ValidationError(f"{self.kind.value}: {name}={value} is out of range")
        for name in _REQUIRED_FIELDS[self.kind]:
            if getattr(self, name) is None:
                raise ValidationError(f"{self.kind.value}: field {name!r} is required")
        if self.kind in (LayerKind.CONV2D, LayerKind.MAXPOOL2D):
            if self.image_size is not None and self.image_size + 2 * self.padding < self.kernel_size:
                raise ValidationError(
                    f"{self.kind.value}: kernel {self.kernel_size} exceeds padded input "
                    f"{self.image_size}+2*{self.padding}"
                )
        if self.kind is LayerKind.MAXPOOL2D and self.padding > self.kernel_size // 2:
            raise ValidationError(
                f"MaxPool2d: padding {self.padding} exceeds half the kernel size {self.kernel_size}"
            )

    def require_standalone(self) -> None:
        """Raise unless this config is fully specified for standalone measurement."""
        missing = [
            name
            for name in sorted(_ALLOWED_FIELDS[self.kind])
            if getattr(self, name) is None
        ]
        if missing:
            raise ValidationError(
                f"{self.kind.value}: standalone config is missing {', '.join(missing)}"
            )

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        for name in _CONFIG_FIELDS:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "LayerConfig":
        if "kind" not in data:
            raise ValidationError("layer object is missing 'kind'")
        try:
            kind = LayerKind(data["kind"])
        except ValueError:
            raise ValidationError(f"unknown layer kind {data['kind']!r}") from None
        extra = set(data) - {"kind"} - set(_CONFIG_FIELDS)
        if extra:
            raise ValidationError(f"{kind.value}: unknown fields {sorted(extra)}")
        return cls(kind=kind, **{k: v for k, v in data.items() if k != "kind"})


@dataclass(frozen=True)
class TensorShape:
    """Shape of a (batch, channels, height, width) tensor; flat vectors use h=w=1."""

    batch: int
    channels: int
    height: int
    width: int

    def __post_init__(self):
        for name in ("batch", "channels", "height", "width"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValidationError(f"TensorShape.{name}={v!r} must be a positive integer")

    @property
    def per_sample_elements(self) -> int:
        return self.channels * self.height * self.width

    def to_dict(self) -> dict:
        return {"batch": self.batch, "channels": self.channels, "height": self.height, "width": self.width}

    @classmethod
    def from_dict(cls, data: dict) -> "TensorShape":
        missing = {"batch", "channels", "height", "width"} - set(data)
        if missing:
            raise ValidationError(f"input shape is missing {sorted(missing)}")
        return cls(data["batch"], data["channels"], data["height"], data["width"])


def conv_output_side(in_side: int, kernel: int, padding: int, stride: int) -> int:
    """Output side of a square convolution/pooling window sweep."""
    out = (in_side + 2 * padding - kernel) // stride + 1
    if out < 1:
        raise ShapeError(
            f"kernel {kernel} with padding {padding} produces an empty output "
            f"from side {in_side}"
        )
    return out


def propagate_shape(input_shape: TensorShape, layer: LayerConfig) -> TensorShape:
    """Resolve the output shape of ``layer`` applied to ``input_shape``."""
    kind = layer.kind
    if kind in (LayerKind.CONV2D, LayerKind.MAXPOOL2D):
        if layer.image_size is not None and (
            input_shape.height != layer.image_size or input_shape.width != layer.image_size
        ):
            raise ShapeError(
                f"{kind.value}: declared image_size {layer.image_size} does not match "
                f"input {input_shape.height}x{input_shape.width}"
            )
        out_h = conv_output_side(input_shape.height, layer.kernel_size, layer.padding, layer.stride)
        out_w = conv_output_side(input_shape.width, layer.kernel_size, layer.padding, layer.stride)
        if kind is LayerKind.CONV2D:
            if input_shape.channels != layer.in_channels:
                raise ShapeError(
                    f"Conv2d expects {layer.in_channels} input channels, got {input_shape.channels}"
                )
            channels = layer.out_channels
        else:
            if layer.in_channels is not None and input_shape.channels != layer.in_channels:
                raise ShapeError(
                    f"MaxPool2d declared {layer.in_channels} channels, got {input_shape.channels}"
                )
            channels = input_shape.channels
        return TensorShape(input_shape.batch, channels, out_h, out_w)
    if kind is LayerKind.LINEAR:
        if input_shape.height != 1 or input_shape.width != 1:
            raise ShapeError("Linear requires a flat input (insert a Flatten layer)")
        if input_shape.channels != layer.in_channels:
            raise ShapeError(
                f"Linear expects {layer.in_channels} input features, got {input_shape.channels}"
            )
        return TensorShape(input_shape.batch, layer.out_channels, 1, 1)
    if kind in ACTIVATION_KINDS or kind is LayerKind.DROPOUT:
        if kind in ACTIVATION_KINDS and layer.in_channels is not None:
            if input_shape.per_sample_elements != layer.in_channels:
                raise ShapeError(
                    f"{kind.value} declared input size {layer.in_channels}, "
                    f"got {input_shape.per_sample_elements}"
                )
        return input_shape
    if kind is LayerKind.FLATTEN:
        return TensorShape(input_shape.batch, input_shape.per_sample_elements, 1, 1)
    if kind is LayerKind.ADAPTIVE_AVG_POOL:
        return TensorShape(input_shape.batch, input_shape.channels, layer.output_size, layer.output_size)
    raise ShapeError(f"cannot propagate through layer kind {kind!r}")


@dataclass(frozen=True)
class ResolvedLayer:
    """A layer with its position and concrete input/output shapes."""

    index: int
    config: LayerConfig
    input_shape: TensorShape
    output_shape: TensorShape


@dataclass(frozen=True)
class ArchitectureSpec:
    name: str
    input_shape: TensorShape
    layers: tuple[LayerConfig, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        # shape propagation through every layer must succeed
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = propagate_shape(shape, layer)
            except ShapeError as exc:
                raise ValidationError(f"{self.name}: layer {i} ({layer.kind.value}): {exc}") from exc

    def with_batch(self, batch_size: int) -> "ArchitectureSpec":
        if batch_size < 1:
            raise ValidationError(f"batch_size={batch_size} must be positive")
        return replace(self, input_shape=replace(self.input_shape, batch=batch_size))

    def resolve_layers(self) -> list[ResolvedLayer]:
        """All layers with concrete shapes, in order."""
        out = []
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            next_shape = propagate_shape(shape, layer)
            out.append(ResolvedLayer(i, layer, shape, next_shape))
            shape = next_shape
        return out

    @property
    def output_shape(self) -> TensorShape:
        shape = self.input_shape
        for layer in self.layers:
            shape = propagate_shape(shape, layer)
        return shape

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "input": self.input_shape.to_dict(),
            "layers": [layer.to_dict() for layer in self.layers],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ArchitectureSpec":
        missing = {"name", "input", "layers"} - set(data)
        if missing:
            raise ValidationError(f"architecture document is missing {sorted(missing)}")
        layers = tuple(LayerConfig.from_dict(obj) for obj in data["layers"])
        return cls(data["name"], TensorShape.from_dict(data["input"]), layers)


def extract_predictable_layers(arch: ArchitectureSpec) -> list[ResolvedLayer]:
    """Resolved layers that carry energy, skipping the negligible structural ones."""
    return [r for r in arch.resolve_layers() if r.config.kind in PREDICTABLE_KINDS]


def as_standalone_config(layer: LayerConfig, input_shape: TensorShape) -> LayerConfig:
    """Rewrite an embedded layer as the equivalent individually-measurable config."""
    kind = layer.kind
    if kind in (LayerKind.CONV2D, LayerKind.MAXPOOL2D):
        if input_shape.height != input_shape.width:
            raise ShapeError(
                f"{kind.value}: non-square input {input_shape.height}x{input_shape.width} "
                "has no standalone image_size"
            )
        return LayerConfig(
            kind=kind,
            batch_size=input_shape.batch,
            image_size=input_shape.height,
            kernel_size=layer.kernel_size,
            in_channels=input_shape.channels,
            out_channels=layer.out_channels if kind is LayerKind.CONV2D else None,
            stride=layer.stride,
            padding=layer.padding,
        )
    if kind is LayerKind.LINEAR:
        return LayerConfig(
            kind=kind,
            batch_size=input_shape.batch,
            in_channels=layer.in_channels,
            out_channels=layer.out_channels,
        )
    if kind in ACTIVATION_KINDS:
        return LayerConfig(
            kind=kind,
            batch_size=input_shape.batch,
            in_channels=input_shape.per_sample_elements,
        )
    raise ValidationError(f"{kind.value} is not individually measurable")


def standalone_input_shape(config: LayerConfig) -> TensorShape:
    """Input tensor shape for a standalone config."""
    config.require_standalone()
    if config.kind in (LayerKind.CONV2D, LayerKind.MAXPOOL2D):
        return TensorShape(config.batch_size, config.in_channels, config.image_size, config.image_size)
    # Linear and activations take flat inputs
    return TensorShape(config.batch_size, config.in_channels, 1, 1)


def _conv(c_in: int, c_out: int, kernel: int = 3, stride: int = 1, padding: int = 1) -> LayerConfig:
    return LayerConfig(
        kind=LayerKind.CONV2D,
        kernel_size=kernel,
        in_channels=c_in,
        out_channels=c_out,
        stride=stride,
        padding=padding,
    )


def _pool(kernel: int, stride: int) -> LayerConfig:
    return LayerConfig(kind=LayerKind.MAXPOOL2D, kernel_size=kernel, stride=stride, padding=0)


def _linear(c_in: int, c_out: int) -> LayerConfig:
    return LayerConfig(kind=LayerKind.LINEAR, in_channels=c_in, out_channels=c_out)


def _act(kind: LayerKind = LayerKind.RELU) -> LayerConfig:
    return LayerConfig(kind=kind)


_VGG_PLANS = {
    "vgg11": (64, "M", 128, "M", 256, 256, "M", 512, 512, "M", 512, 512, "M"),
    "vgg13": (64, 64, "M", 128, 128, "M", 256, 256, "M", 512, 512, "M", 512, 512, "M"),
    "vgg16": (64, 64, "M", 128, 128, "M", 256, 256, 256, "M", 512, 512, 512, "M", 512, 512, 512, "M"),
}


def _vgg_layers(plan) -> tuple[LayerConfig, ...]:
    layers: list[LayerConfig] = []
    channels = 3
    for item in plan:
        if item == "M":
            layers.append(_pool(2, 2))
        else:
            layers.append(_conv(channels, item))
            layers.append(_act())
            channels = item
    layers.append(LayerConfig(kind=LayerKind.ADAPTIVE_AVG_POOL, output_size=7))
    layers.append(LayerConfig(kind=LayerKind.FLATTEN))
    layers += [
        _linear(512 * 7 * 7, 4096),
        _act(),
        LayerConfig(kind=LayerKind.DROPOUT),
        _linear(4096, 4096),
        _act(),
        LayerConfig(kind=LayerKind.DROPOUT),
        _linear(4096, 1000),
    ]
    return tuple(layers)


def _alexnet_layers() -> tuple[LayerConfig, ...]:
    return (
        _conv(3, 64, kernel=11, stride=4, padding=2),
        _act(),
        _pool(3, 2),
        _conv(64, 192, kernel=5, padding=2),
        _act(),
        _pool(3, 2),
        _conv(192, 384),
        _act(),
        _conv(384, 256),
        _act(),
        _conv(256, 256),
        _act(),
        _pool(3, 2),
        LayerConfig(kind=LayerKind.ADAPTIVE_AVG_POOL, output_size=6),
        LayerConfig(kind=LayerKind.FLATTEN),
        LayerConfig(kind=LayerKind.DROPOUT),
        _linear(256 * 6 * 6, 4096),
        _act(),
        LayerConfig(kind=LayerKind.DROPOUT),
        _linear(4096, 4096),
        _act(),
        _linear(4096, 1000),
    )


def _preset(name: str) -> ArchitectureSpec:
    input_shape = TensorShape(batch=1, channels=3, height=224, width=224)
    if name == "alexnet":
        return ArchitectureSpec("alexnet", input_shape, _alexnet_layers())
    return ArchitectureSpec(name, input_shape, _vgg_layers(_VGG_PLANS[name]))


PRESET_NAMES = ("alexnet", "vgg11", "vgg13", "vgg16")


def load_architecture(source) -> ArchitectureSpec:
    """Load an architecture from a preset name, JSON file path, JSON text, or dict."""
    if isinstance(source, dict):
        return ArchitectureSpec.from_dict(source)
    if isinstance(source, os.PathLike):
        source = os.fspath(source)
    if not isinstance(source, str):
        raise ValidationError(f"cannot load an architecture from {type(source).__name__}")
    lowered = source.strip().lower()
    if lowered in PRESET_NAMES:
        return _preset(lowered)
    if os.path.exists(source):
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    elif source.lstrip().startswith("{"):
        text = source
    else:
        raise UnknownPresetError(
            f"{source!r} is not a preset ({', '.join(PRESET_NAMES)}), an existing file, or JSON text"
        )
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid architecture JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("architecture JSON must be an object")
    return ArchitectureSpec.from_dict(data)
