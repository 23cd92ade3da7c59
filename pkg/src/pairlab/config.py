import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Dict, Sequence, Tuple, get_type_hints

from pairlab.errors import ArgumentError, FormatError, UsageError
from pairlab.export import read_json
from pairlab.lbfgs import LbfgsConfig
from pairlab.lsi import LsiConfig
from pairlab.masks import kIdentity, kMaskKinds
from pairlab.pair import TrainConfig
from pairlab.tomography import (kDefaultAngleCount, kDefaultDetectorCount,
                                kDefaultDetectorSpacing, kDefaultGridSide)

kAlternateSuffix = "~alt"


@dataclass
class GeometryConfig:
    grid_side: int = kDefaultGridSide
    angle_count: int = kDefaultAngleCount
    detector_count: int = kDefaultDetectorCount
    detector_spacing: float = kDefaultDetectorSpacing


@dataclass
class DataConfig:
    train_count: int = 2000
    test_count: int = 100
    calib_count: int = 100
    ood_count: int = 100
    ood: bool = True
    noise_fraction: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if min(self.train_count, self.test_count, self.calib_count) < 1:
            raise ArgumentError("dataset sizes must be positive")
        if self.ood and self.ood_count < 1:
            raise ArgumentError("out-of-distribution set size must be positive")
        if self.noise_fraction < 0.0:
            raise ArgumentError(f"noise fraction must be nonnegative, got {self.noise_fraction}")


@dataclass
class MaskConfig:
    kinds: Tuple[str, ...] = ("random-columns", "block-columns")
    fraction: float = 0.25
    seed: int = 1
    alternate_seed: int = 2

    def validate(self) -> None:
        for kind in self.kinds:
            if kind not in kMaskKinds:
                raise ArgumentError(f"unknown mask kind '{kind}'")
        if not 0.0 <= self.fraction <= 1.0:
            raise ArgumentError(f"mask fraction must be in [0, 1], got {self.fraction}")


@dataclass
class ModelConfig:
    latent_x: int = 64
    latent_y: int = 64
    hidden_x: Tuple[int, ...] = (128, 64)
    hidden_y: Tuple[int, ...] = (256, 128)
    activation: str = "tanh"
    seed: int = 0
    linear: bool = True
    encdec: bool = True


@dataclass
class LsiSection:
    zy: LsiConfig = field(
        default_factory=lambda: LsiConfig(LbfgsConfig(max_iterations=10)))
    zx: LsiConfig = field(
        default_factory=lambda: LsiConfig(LbfgsConfig(max_iterations=10)))
    mlsi: LsiConfig = field(
        default_factory=lambda: LsiConfig(LbfgsConfig(max_iterations=100)))
    completion: LsiConfig = field(
        default_factory=lambda: LsiConfig(LbfgsConfig(max_iterations=25)))
    ensemble: int = 1
    perturbation: float = 0.1
    ensemble_seed: int = 0
    tikhonov_lambdas: Tuple[float, ...] = (0.01, 0.1, 1.0)

    def validate(self) -> None:
        for c in (self.zy, self.zx, self.mlsi, self.completion):
            c.validate()
        if self.ensemble < 1:
            raise ArgumentError(f"ensemble size must be positive, got {self.ensemble}")
        if not self.tikhonov_lambdas or min(self.tikhonov_lambdas) <= 0.0:
            raise ArgumentError("Tikhonov weights must be positive")


@dataclass
class SweepConfig:
    kind: str = "random-columns"
    fractions: Tuple[float, ...] = (0.0, 0.3, 0.6, 0.9)


@dataclass
class CertifyConfig:
    mask: str = "random-columns"
    pair_count: int = 64
    radius: float = 0.01
    seed: int = 0


@dataclass
class ExperimentConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    data: DataConfig = field(default_factory=DataConfig)
    masks: MaskConfig = field(default_factory=MaskConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    lsi: LsiSection = field(default_factory=LsiSection)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    certify: CertifyConfig = field(default_factory=CertifyConfig)
    output_dir: str = "out"

    def validate(self) -> None:
        self.data.validate()
        self.masks.validate()
        self.train.validate()
        self.lsi.validate()
        for kind in (self.sweep.kind, self.certify.mask.split("~")[0]):
            if kind not in kMaskKinds:
                raise ArgumentError(f"unknown mask kind '{kind}'")

    def seeds(self) -> Dict[str, int]:
        return {
            "data": self.data.seed,
            "mask": self.masks.seed,
            "mask_alt": self.masks.alternate_seed,
            "model": self.model.seed,
            "train": self.train.seed,
            "ensemble": self.lsi.ensemble_seed,
            "certify": self.certify.seed,
        }


def parse_mask_selector(selector: str, config: ExperimentConfig) -> Tuple[str, int]:
    """Splits `<kind>` or `<kind>~alt` into a kind and its seed."""
    kind, alternate = selector, False
    if selector.endswith(kAlternateSuffix):
        kind, alternate = selector[:-len(kAlternateSuffix)], True
    if kind not in kMaskKinds:
        raise UsageError(f"unknown mask selector '{selector}'")
    if alternate and kind == kIdentity:
        raise UsageError("the identity mask has no alternate")
    return kind, config.masks.alternate_seed if alternate else config.masks.seed


# Serialization.


def config_to_dict(config: Any) -> Dict[str, Any]:
    return json.loads(json.dumps(dataclasses.asdict(config)))


def _convert(value: Any, hint: Any, path: str) -> Any:
    if dataclasses.is_dataclass(hint):
        return _from_dict(hint, value, path)
    origin = getattr(hint, "__origin__", None)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise FormatError(f"{path}: expected a list")
        args = hint.__args__
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        if len(args) != len(value):
            raise FormatError(f"{path}: expected {len(args)} entries, found {len(value)}")
        return tuple(_convert(v, a, f"{path}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if hint is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if hint is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if hint in (bool, str) and isinstance(value, hint):
        return value
    raise FormatError(f"{path}: expected {hint.__name__}, found {value!r}")


def _from_dict(cls: Any, d: Any, path: str) -> Any:
    if not isinstance(d, dict):
        raise FormatError(f"{path}: expected an object")
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise FormatError(f"{path}: unknown key '{unknown[0]}'")
    kwargs = {
        name: _convert(value, hints[name], f"{path}.{name}")
        for name, value in d.items()
    }
    return cls(**kwargs)


def config_from_dict(d: Dict[str, Any]) -> ExperimentConfig:
    return _from_dict(ExperimentConfig, d, "config")


def config_hash(config: ExperimentConfig) -> str:
    """Hash of everything but the output directory."""
    d = config_to_dict(config)
    d.pop("output_dir")
    canonical = json.dumps(d,
                           sort_keys=True,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def load_config(path: str) -> ExperimentConfig:
    return _from_dict(ExperimentConfig, read_json(path), path)


def save_config(config: ExperimentConfig, path: str) -> None:
    with open(path, "w") as fout:
        json.dump(config_to_dict(config), fout, indent=2, sort_keys=True)
        fout.write("\n")


# Overrides.


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: ExperimentConfig,
                    overrides: Sequence[str]) -> ExperimentConfig:
    """Applies `a.b.c=value` assignments in order. Values are parsed as JSON
    and fall back to plain strings."""
    d = config_to_dict(config)
    for override in overrides:
        key, sep, text = override.partition("=")
        if not sep or not key:
            raise UsageError(f"malformed override '{override}', expected key=value")
        node = d
        *parents, leaf = key.split(".")
        for part in parents:
            if not isinstance(node.get(part), dict):
                raise UsageError(f"unknown configuration key '{key}'")
            node = node[part]
        if leaf not in node or isinstance(node[leaf], dict):
            raise UsageError(f"unknown configuration key '{key}'")
        node[leaf] = _parse_value(text)
    try:
        return config_from_dict(d)
    except FormatError as e:
        raise UsageError(f"invalid override: {e}") from e
