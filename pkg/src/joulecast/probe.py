"""CPU energy measurement: native forward-pass workloads metered via RAPL.

The protocol per configuration: read the package energy counters, run as many
forward passes as fit in a fixed wall-clock window, read again, and normalize
the (wraparound-safe) delta by the pass count. This repeats up to three times
and the per-pass energies are averaged; repeats whose counter reads fail are
dropped. Counter source, workload, and clock are injectable so the arithmetic
is fully testable without hardware.
"""
from __future__ import annotations

import glob
import os
import threading
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .arch import (
    ArchitectureSpec,
    LayerConfig,
    LayerKind,
    standalone_input_shape,
)
from .errors import (
    AllRepeatsFailedError,
    ConcurrentMeasurementError,
    RaplUnavailableError,
    ShapeError,
    ValidationError,
)

POWERCAP_ROOT_ENV = "JOULECAST_POWERCAP_ROOT"
DEFAULT_POWERCAP_ROOT = "/sys/class/powercap"


# ---------------------------------------------------------------------------
# forward-pass kernels (reference semantics, deterministic weights)
# ---------------------------------------------------------------------------

def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, stride: int, padding: int) -> np.ndarray:
    """Direct convolution (cross-correlation) with zero padding."""
    batch, c_in, h, w = x.shape
    c_out, c_in_w, k, _ = weight.shape
    if c_in_w != c_in:
        raise ShapeError(f"conv weight expects {c_in_w} channels, input has {c_in}")
    out_h = (h + 2 * padding - k) // stride + 1
    out_w = (w + 2 * padding - k) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError("convolution output is empty")
    padded = x
    if padding:
        padded = np.zeros((batch, c_in, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
        padded[:, :, padding : padding + h, padding : padding + w] = x
    out = np.zeros((batch, c_out, out_h, out_w), dtype=x.dtype)
    for ki in range(k):
        for kj in range(k):
            window = padded[
                :, :, ki : ki + (out_h - 1) * stride + 1 : stride, kj : kj + (out_w - 1) * stride + 1 : stride
            ]
            out += np.einsum("oc,bcyx->boyx", weight[:, :, ki, kj], window, optimize=True)
    return out + bias[None, :, None, None]


def maxpool2d_forward(x: np.ndarray, kernel: int, stride: int, padding: int) -> np.ndarray:
    """Window max with -inf padding (every window overlaps the real input)."""
    batch, channels, h, w = x.shape
    out_h = (h + 2 * padding - kernel) // stride + 1
    out_w = (w + 2 * padding - kernel) // stride + 1
    if out_h < 1 or out_w < 1:
        raise ShapeError("pooling output is empty")
    padded = x
    if padding:
        padded = np.full((batch, channels, h + 2 * padding, w + 2 * padding), -np.inf, dtype=x.dtype)
        padded[:, :, padding : padding + h, padding : padding + w] = x
    out = np.full((batch, channels, out_h, out_w), -np.inf, dtype=x.dtype)
    for ki in range(kernel):
        for kj in range(kernel):
            window = padded[
                :, :, ki : ki + (out_h - 1) * stride + 1 : stride, kj : kj + (out_w - 1) * stride + 1 : stride
            ]
            np.maximum(out, window, out=out)
    return out


def linear_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return x @ weight.T + bias


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid_forward(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def tanh_forward(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def softmax_forward(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def adaptive_avg_pool_forward(x: np.ndarray, output_size: int) -> np.ndarray:
    batch, channels, h, w = x.shape
    out = np.empty((batch, channels, output_size, output_size), dtype=x.dtype)
    for i in range(output_size):
        y0, y1 = (i * h) // output_size, -(-(i + 1) * h // output_size)
        for j in range(output_size):
            x0, x1 = (j * w) // output_size, -(-(j + 1) * w // output_size)
            out[:, :, i, j] = x[:, :, y0:y1, x0:x1].mean(axis=(2, 3))
    return out


def init_weights(config: LayerConfig, seed: int = 0, dtype=np.float64) -> dict[str, np.ndarray]:
    """Deterministic weight tensors; values only matter for reproducibility."""
    rng = np.random.default_rng(seed)
    if config.kind is LayerKind.CONV2D:
        k = config.kernel_size
        scale = 1.0 / np.sqrt(config.in_channels * k * k)
        return {
            "weight": rng.uniform(-scale, scale, (config.out_channels, config.in_channels, k, k)).astype(dtype),
            "bias": rng.uniform(-scale, scale, config.out_channels).astype(dtype),
        }
    if config.kind is LayerKind.LINEAR:
        scale = 1.0 / np.sqrt(config.in_channels)
        return {
            "weight": rng.uniform(-scale, scale, (config.out_channels, config.in_channels)).astype(dtype),
            "bias": rng.uniform(-scale, scale, config.out_channels).astype(dtype),
        }
    return {}


def forward_workload(
    config: LayerConfig, x: np.ndarray, weights: dict[str, np.ndarray] | None = None, seed: int = 0
) -> np.ndarray:
    """One forward pass through a standalone module."""
    kind = config.kind
    if kind in (LayerKind.CONV2D, LayerKind.MAXPOOL2D):
        if x.ndim != 4:
            raise ShapeError(f"{kind.value} expects a 4-d input, got {x.ndim}-d")
        if kind is LayerKind.CONV2D:
            if weights is None:
                weights = init_weights(config, seed, x.dtype)
            return conv2d_forward(x, weights["weight"], weights["bias"], config.stride, config.padding)
        return maxpool2d_forward(x, config.kernel_size, config.stride, config.padding)
    if kind is LayerKind.LINEAR:
        if x.ndim != 2 or x.shape[1] != config.in_channels:
            raise ShapeError(f"Linear expects (batch, {config.in_channels}), got {x.shape}")
        if weights is None:
            weights = init_weights(config, seed, x.dtype)
        return linear_forward(x, weights["weight"], weights["bias"])
    if kind is LayerKind.RELU:
        return relu_forward(x)
    if kind is LayerKind.SIGMOID:
        return sigmoid_forward(x)
    if kind is LayerKind.TANH:
        return tanh_forward(x)
    if kind is LayerKind.SOFTMAX:
        return softmax_forward(x)
    raise ValidationError(f"{kind.value} has no standalone workload")


def make_workload(config: LayerConfig, seed: int = 0, dtype=np.float64):
    """Closure running one forward pass; input and weights allocated once."""
    config.require_standalone()
    shape = standalone_input_shape(config)
    rng = np.random.default_rng(seed)
    if config.kind in (LayerKind.CONV2D, LayerKind.MAXPOOL2D):
        x = rng.standard_normal((shape.batch, shape.channels, shape.height, shape.width)).astype(dtype)
    else:
        x = rng.standard_normal((shape.batch, shape.channels)).astype(dtype)
    weights = init_weights(config, seed, dtype)

    def run():
        forward_workload(config, x, weights)

    return run


def make_architecture_workload(arch: ArchitectureSpec, batch_size: int, seed: int = 0, dtype=np.float64):
    """Closure running one forward pass through the whole architecture."""
    spec = arch.with_batch(batch_size)
    rng = np.random.default_rng(seed)
    shape = spec.input_shape
    x0 = rng.standard_normal((shape.batch, shape.channels, shape.height, shape.width)).astype(dtype)
    layer_weights = [init_weights(layer, seed + i, dtype) for i, layer in enumerate(spec.layers)]

    def run():
        x = x0
        for layer, weights in zip(spec.layers, layer_weights):
            kind = layer.kind
            if kind is LayerKind.FLATTEN:
                x = x.reshape(x.shape[0], -1)
            elif kind is LayerKind.DROPOUT:
                pass  # identity at inference
            elif kind is LayerKind.ADAPTIVE_AVG_POOL:
                x = adaptive_avg_pool_forward(x, layer.output_size)
            elif kind is LayerKind.CONV2D:
                x = conv2d_forward(x, weights["weight"], weights["bias"], layer.stride, layer.padding)
            elif kind is LayerKind.MAXPOOL2D:
                x = maxpool2d_forward(x, layer.kernel_size, layer.stride, layer.padding)
            elif kind is LayerKind.LINEAR:
                x = linear_forward(x, weights["weight"], weights["bias"])
            elif kind is LayerKind.RELU:
                x = relu_forward(x)
            elif kind is LayerKind.SIGMOID:
                x = sigmoid_forward(x)
            elif kind is LayerKind.TANH:
                x = tanh_forward(x)
            elif kind is LayerKind.SOFTMAX:
                x = softmax_forward(x)
        return x

    return run


# ---------------------------------------------------------------------------
# RAPL counters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RaplDomain:
    name: str
    counter_path: str
    max_range_uj: int


class CounterReadError(RuntimeError):
    pass


def powercap_root() -> str:
    return os.environ.get(POWERCAP_ROOT_ENV, DEFAULT_POWERCAP_ROOT)


def discover_rapl_domains(root: str | None = None, name_prefixes: tuple[str, ...] = ("package",)) -> list[RaplDomain]:
    """Top-level powercap domains whose name matches; package domains by default."""
    root = root or powercap_root()
    domains = []
    for path in sorted(glob.glob(os.path.join(root, "intel-rapl:[0-9]*"))):
        if ":" in os.path.basename(path).split("intel-rapl:", 1)[1]:
            continue  # subdomain like intel-rapl:0:0
        try:
            with open(os.path.join(path, "name"), "r", encoding="ascii") as fh:
                name = fh.read().strip()
            with open(os.path.join(path, "max_energy_range_uj"), "r", encoding="ascii") as fh:
                max_range = int(fh.read().strip())
        except OSError:
            continue
        if name_prefixes and not name.startswith(name_prefixes):
            continue
        domains.append(RaplDomain(name, os.path.join(path, "energy_uj"), max_range))
    return domains


def read_energy(domain: RaplDomain) -> int:
    """Current counter value in microjoules."""
    try:
        with open(domain.counter_path, "r", encoding="ascii") as fh:
            return int(fh.read().strip())
    except (OSError, ValueError) as exc:
        raise CounterReadError(f"{domain.counter_path}: {exc}") from exc


def energy_delta(before: int, after: int, max_range: int) -> int:
    """Counter difference accounting for at most one wraparound."""
    return (after - before + max_range) % max_range


class RaplCounterSource:
    """Reads all discovered package domains; deltas are summed per-domain."""

    def __init__(self, domains: list[RaplDomain] | None = None, root: str | None = None):
        self.domains = domains if domains is not None else discover_rapl_domains(root)
        if not self.domains:
            raise RaplUnavailableError(
                f"no readable RAPL package domains under {root or powercap_root()} "
                "(missing powercap support or insufficient permissions)"
            )
        try:
            self.read_uj()
        except CounterReadError as exc:
            raise RaplUnavailableError(f"RAPL counters not readable: {exc}") from exc

    @property
    def domain_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.domains)

    @property
    def max_ranges_uj(self) -> tuple[int, ...]:
        return tuple(d.max_range_uj for d in self.domains)

    def read_uj(self) -> tuple[int, ...]:
        return tuple(read_energy(d) for d in self.domains)


def counters_delta_uj(before: tuple[int, ...], after: tuple[int, ...], max_ranges: tuple[int, ...]) -> int:
    return sum(energy_delta(b, a, m) for b, a, m in zip(before, after, max_ranges))


class SimulatedMachine:
    """Deterministic stand-in for a measured host: a virtual clock advanced by
    each forward pass (time proportional to the pass's MAC count) and an energy
    counter integrating constant package power over that clock."""

    def __init__(
        self,
        mac_rate: float = 5e9,
        power_w: float = 20.0,
        noise: float = 0.01,
        seed: int = 0,
        max_range_uj: int = 65_532_610_987,
    ):
        self.mac_rate = mac_rate
        self.power_w = power_w
        self.noise = noise
        self.max_range_uj = max_range_uj
        self._rng = np.random.default_rng(seed)
        self._t = 0.0

    def clock(self) -> float:
        return self._t

    def workload(self, macs: int):
        base = max(macs, 1) / self.mac_rate

        def run():
            jitter = 1.0 + self.noise * float(self._rng.standard_normal())
            self._t += base * max(jitter, 0.1)

        return run

    def counter(self) -> "SimulatedCounter":
        return SimulatedCounter(self)


class SimulatedCounter:
    def __init__(self, machine: SimulatedMachine):
        self._machine = machine

    @property
    def domain_names(self) -> tuple[str, ...]:
        return ("simulated",)

    @property
    def max_ranges_uj(self) -> tuple[int, ...]:
        return (self._machine.max_range_uj,)

    def read_uj(self) -> tuple[int, ...]:
        reading = int(self._machine.power_w * self._machine.clock() * 1e6)
        return (reading % self._machine.max_range_uj,)


# ---------------------------------------------------------------------------
# measurement protocol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RepeatResult:
    passes: int
    elapsed_s: float
    energy_j: float
    long_pass: bool  # a single pass exceeded the window

    @property
    def energy_per_pass_j(self) -> float:
        return self.energy_j / self.passes


@dataclass(frozen=True)
class ProbeResult:
    config: LayerConfig | None  # None for full-architecture workloads
    window_seconds: float
    repeats: tuple[RepeatResult, ...]
    failed_repeats: int = 0
    domains: tuple[str, ...] = ()  # energy counter domains that were summed

    @property
    def energy_per_pass_j(self) -> float:
        return float(sum(r.energy_per_pass_j for r in self.repeats) / len(self.repeats))


_measure_lock = threading.Lock()


def measure_config(
    config: LayerConfig | None,
    window_seconds: float = 30.0,
    repeats: int = 3,
    counter=None,
    workload=None,
    clock=None,
    seed: int = 0,
    warn_on_load: bool = True,
    pin_to_cpu: int | None = None,
) -> ProbeResult:
    """Meter ``repeats`` fixed windows of forward passes through ``config``.

    One measurement at a time per process: a concurrent call contaminates the
    shared package counters and is refused outright. ``pin_to_cpu`` restricts
    the process to one CPU for the duration of the measurement (Linux only);
    by default no affinity is set.
    """
    if window_seconds <= 0 or repeats < 1:
        raise ValidationError("window_seconds must be positive and repeats >= 1")
    if not _measure_lock.acquire(blocking=False):
        raise ConcurrentMeasurementError("another measurement is already running in this process")
    saved_affinity = None
    try:
        if pin_to_cpu is not None:
            if not hasattr(os, "sched_setaffinity"):
                raise ValidationError("CPU pinning is not supported on this platform")
            saved_affinity = os.sched_getaffinity(0)
            os.sched_setaffinity(0, {pin_to_cpu})
        if counter is None:
            counter = RaplCounterSource()
        if workload is None:
            if config is None:
                raise ValidationError("either a config or an explicit workload is required")
            workload = make_workload(config, seed)
        if clock is None:
            clock = time.monotonic
        if warn_on_load and hasattr(os, "getloadavg"):
            load = os.getloadavg()[0]
            cpus = os.cpu_count() or 1
            if load > 0.5 * cpus:
                warnings.warn(
                    f"load average {load:.2f} on {cpus} CPUs; concurrent work will contaminate readings",
                    UserWarning,
                    stacklevel=2,
                )
        results = []
        failed = 0
        for _ in range(repeats):
            try:
                before = counter.read_uj()
                start = clock()
                passes = 0
                while True:
                    workload()
                    passes += 1
                    elapsed = clock() - start
                    if elapsed >= window_seconds:
                        break
                after = counter.read_uj()
            except CounterReadError as exc:
                failed += 1
                warnings.warn(f"dropping repeat with failed counter read: {exc}", UserWarning, stacklevel=2)
                continue
            energy_j = counters_delta_uj(before, after, counter.max_ranges_uj) / 1e6
            results.append(
                RepeatResult(
                    passes=passes,
                    elapsed_s=elapsed,
                    energy_j=energy_j,
                    long_pass=passes == 1 and elapsed > window_seconds,
                )
            )
        if not results:
            what = config.kind.value if config is not None else "architecture workload"
            raise AllRepeatsFailedError(f"all {repeats} repeats failed for {what}")
        return ProbeResult(
            config=config,
            window_seconds=window_seconds,
            repeats=tuple(results),
            failed_repeats=failed,
            domains=tuple(getattr(counter, "domain_names", ())),
        )
    finally:
        if saved_affinity is not None:
            os.sched_setaffinity(0, saved_affinity)
        _measure_lock.release()


def measure_architecture_workload(
    arch: ArchitectureSpec,
    batch_size: int,
    window_seconds: float = 30.0,
    repeats: int = 3,
    counter=None,
    workload=None,
    clock=None,
    seed: int = 0,
) -> ProbeResult:
    """Meter full-architecture forward passes."""
    if workload is None:
        workload = make_architecture_workload(arch, batch_size, seed)
    return measure_config(
        None, window_seconds, repeats, counter=counter, workload=workload, clock=clock, seed=seed,
        warn_on_load=False,
    )
