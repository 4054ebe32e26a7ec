"""
Declarative network topologies and the preset registry
"""

from dataclasses import dataclass
from functools import wraps
from typing import Callable, Dict, List, Optional, Tuple

from ..errors import ConfigError, TopologyError

LAYER_KINDS = ("conv", "maxpool", "flatten", "dense", "dropout")
ACTIVATIONS = ("relu", "identity")

Shape = Tuple[int, ...]


@dataclass(frozen=True)
class LayerSpec:
    """One row of a topology table"""
    kind: str
    kernel_size: int = 0
    stride: int = 1
    padding: int = 0
    depth: int = 0
    activation: str = "identity"
    dropout_rate: float = 0.0
    name: str = ""

    def __post_init__(self):
        label = self.name or self.kind
        if self.kind not in LAYER_KINDS:
            raise TopologyError(f"unknown layer kind '{self.kind}'", label)
        if self.activation not in ACTIVATIONS:
            raise TopologyError(f"unknown activation '{self.activation}'", label)
        if self.stride < 1:
            raise TopologyError("stride must be >= 1", label)
        if self.padding < 0:
            raise TopologyError("padding must be >= 0", label)
        if not 0.0 <= self.dropout_rate <= 1.0:
            raise TopologyError("dropout_rate must lie in [0, 1]", label)
        if self.kind in ("conv", "maxpool") and self.kernel_size < 1:
            raise TopologyError("kernel_size must be >= 1", label)
        if self.kind in ("conv", "dense") and self.depth < 1:
            raise TopologyError("depth must be >= 1", label)

    @property
    def has_params(self) -> bool:
        return self.kind in ("conv", "dense")

    def to_line(self) -> str:
        """Serialize in table column order: kind, kernel, stride, depth,
        activation, dropout, then padding and name"""
        return ",".join([
            self.kind, str(self.kernel_size), str(self.stride), str(self.depth),
            self.activation, repr(float(self.dropout_rate)), str(self.padding),
            self.name,
        ])

    @classmethod
    def from_line(cls, line: str) -> "LayerSpec":
        parts = line.strip().split(",")
        if len(parts) != 8:
            raise TopologyError(f"expected 8 comma-separated fields, got {len(parts)}")
        kind, kernel, stride, depth, activation, rate, padding, name = parts
        try:
            return cls(kind=kind, kernel_size=int(kernel), stride=int(stride),
                       depth=int(depth), activation=activation,
                       dropout_rate=float(rate), padding=int(padding), name=name)
        except ValueError as e:
            raise TopologyError(f"bad layer line '{line.strip()}': {e}")


def layer_output_shape(layer: LayerSpec, shape: Shape) -> Shape:
    """Output shape of a single layer for a per-sample input shape"""
    label = layer.name or layer.kind
    if layer.kind in ("conv", "maxpool"):
        if len(shape) != 3:
            raise TopologyError(f"expects an H x W x C input, got {shape}", label)
        h, w, c = shape
        k, s, p = layer.kernel_size, layer.stride, layer.padding
        out_h = (h + 2 * p - k) // s + 1
        out_w = (w + 2 * p - k) // s + 1
        if h + 2 * p < k or w + 2 * p < k or out_h < 1 or out_w < 1:
            raise TopologyError(
                f"window {k}x{k} (stride {s}, pad {p}) does not fit input {h}x{w}",
                label)
        depth = layer.depth if layer.kind == "conv" else c
        return (out_h, out_w, depth)
    if layer.kind == "flatten":
        size = 1
        for d in shape:
            size *= d
        return (size,)
    if layer.kind == "dense":
        if len(shape) != 1:
            raise TopologyError(f"expects a flat input, got {shape}", label)
        return (layer.depth,)
    return shape


@dataclass
class NetworkTopology:
    """Ordered layer sequence plus the per-sample input shape"""
    layers: List[LayerSpec]
    input_shape: Shape = (300, 300, 3)
    preset: str = "custom"

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        named = []
        counts: Dict[str, int] = {}
        for layer in self.layers:
            if layer.name:
                named.append(layer)
                continue
            counts[layer.kind] = counts.get(layer.kind, 0) + 1
            named.append(LayerSpec(
                kind=layer.kind, kernel_size=layer.kernel_size, stride=layer.stride,
                padding=layer.padding, depth=layer.depth,
                activation=layer.activation, dropout_rate=layer.dropout_rate,
                name=f"{layer.kind}{counts[layer.kind]}"))
        self.layers = named
        self.validate()

    def validate(self):
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise TopologyError(f"input shape must be positive H x W x C, got {self.input_shape}")
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise TopologyError("layer names must be unique")
        shapes = self.shape_chain()
        if shapes[-1] != (2,):
            raise TopologyError(f"final output must be 2 units, got {shapes[-1]}",
                                self.layers[-1].name)

    def shape_chain(self) -> List[Shape]:
        """Output shape after every layer, in order"""
        shapes = []
        shape: Shape = self.input_shape
        for layer in self.layers:
            shape = layer_output_shape(layer, shape)
            shapes.append(shape)
        return shapes

    def input_shapes(self) -> List[Shape]:
        """Input shape seen by every layer, in order"""
        return [self.input_shape] + self.shape_chain()[:-1]

    def param_shapes(self) -> Dict[str, Shape]:
        """Trainable tensor shapes keyed by '<layer>.weight' / '<layer>.bias'"""
        shapes: Dict[str, Shape] = {}
        for layer, in_shape in zip(self.layers, self.input_shapes()):
            if layer.kind == "conv":
                k = layer.kernel_size
                shapes[f"{layer.name}.weight"] = (k, k, in_shape[2], layer.depth)
                shapes[f"{layer.name}.bias"] = (layer.depth,)
            elif layer.kind == "dense":
                shapes[f"{layer.name}.weight"] = (in_shape[0], layer.depth)
                shapes[f"{layer.name}.bias"] = (layer.depth,)
        return shapes

    def param_count(self) -> int:
        total = 0
        for shape in self.param_shapes().values():
            size = 1
            for d in shape:
                size *= d
            total += size
        return total

    def to_text(self) -> str:
        h, w, c = self.input_shape
        lines = [f"input,{h},{w},{c},{self.preset}"]
        lines.extend(layer.to_line() for layer in self.layers)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "NetworkTopology":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines or not lines[0].startswith("input,"):
            raise TopologyError("topology text must start with an input line")
        header = lines[0].split(",")
        if len(header) != 5:
            raise TopologyError(f"bad input line '{lines[0]}'")
        try:
            input_shape = (int(header[1]), int(header[2]), int(header[3]))
        except ValueError:
            raise TopologyError(f"bad input line '{lines[0]}'")
        layers = [LayerSpec.from_line(line) for line in lines[1:]]
        return cls(layers=layers, input_shape=input_shape, preset=header[4])


class TopologyRegistry:
    """Registry of named topology builders"""

    def __init__(self):
        self._builders: Dict[str, Callable[..., NetworkTopology]] = {}

    def register(self, name: str):
        """Register a preset builder under a name"""
        def decorator(func):
            @wraps(func)
            def wrapper(**kwargs) -> NetworkTopology:
                topology = func(**kwargs)
                topology.preset = name
                return topology

            self._builders[name] = wrapper
            return wrapper

        return decorator

    def get(self, name: str) -> Optional[Callable[..., NetworkTopology]]:
        return self._builders.get(name)

    def build(self, name: str, **kwargs) -> NetworkTopology:
        builder = self.get(name)
        if not builder:
            raise ConfigError(
                f"unknown topology preset '{name}' (known: {', '.join(self.list_presets())})")
        return builder(**kwargs)

    def list_presets(self) -> List[str]:
        return sorted(self._builders)


presets = TopologyRegistry()


def _alexnet_like(input_side: int, conv_depths: Tuple[int, ...],
                  dense_units: Tuple[int, ...], literal_final_relu: bool,
                  literal_output_dropout: bool, dropout_rate: float = 0.5) -> NetworkTopology:
    d1, d2, d3, d4, d5 = conv_depths
    layers = [
        LayerSpec("conv", kernel_size=11, stride=4, padding=0, depth=d1, activation="relu"),
        LayerSpec("maxpool", kernel_size=3, stride=2),
        LayerSpec("conv", kernel_size=5, stride=1, padding=2, depth=d2, activation="relu"),
        LayerSpec("maxpool", kernel_size=3, stride=2),
        LayerSpec("conv", kernel_size=3, stride=1, padding=1, depth=d3, activation="relu"),
        LayerSpec("conv", kernel_size=3, stride=1, padding=1, depth=d4, activation="relu"),
        LayerSpec("conv", kernel_size=3, stride=1, padding=1, depth=d5, activation="relu"),
        LayerSpec("maxpool", kernel_size=3, stride=2),
        LayerSpec("flatten"),
    ]
    for i, units in enumerate(dense_units):
        last = i == len(dense_units) - 1
        activation = "relu" if (not last or literal_final_relu) else "identity"
        layers.append(LayerSpec("dropout", dropout_rate=dropout_rate))
        layers.append(LayerSpec("dense", depth=units, activation=activation))
    if literal_output_dropout:
        layers.append(LayerSpec("dropout", dropout_rate=dropout_rate))
    return NetworkTopology(layers=layers, input_shape=(input_side, input_side, 3))


@presets.register("paper")
def paper_topology(input_side: int = 300, literal_final_relu: bool = False,
                   literal_output_dropout: bool = False) -> NetworkTopology:
    """Five convolutions, three max-pools, three dense layers"""
    return _alexnet_like(input_side, (96, 256, 384, 384, 256), (4096, 4096, 2),
                         literal_final_relu, literal_output_dropout)


@presets.register("mini")
def mini_topology(input_side: int = 100, literal_final_relu: bool = False,
                  literal_output_dropout: bool = False) -> NetworkTopology:
    """Same kernel/stride/pool structure with desk-scale depths"""
    return _alexnet_like(input_side, (16, 32, 48, 48, 32), (256, 256, 2),
                         literal_final_relu, literal_output_dropout)
