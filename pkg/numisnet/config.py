"""
Run configuration

A RunConfig merges the per-stage settings with the run-wide paths and seed.
Files hold `key = value` lines; dotted keys address a section, e.g.
`train.batch_size = 24` or `split.ratios = 0.7, 0.15, 0.15`.
"""

import dataclasses
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union, get_type_hints

from .core.topology import NetworkTopology, presets
from .dataset import SplitConfig
from .errors import ConfigError
from .saliency import OcclusionConfig
from .synth import CONCEPTS, SynthSpec
from .text import LexiconTables, load_lexicon
from .trainer import TrainConfig

logger = logging.getLogger(__name__)

COMMANDS = ("synth", "build-dataset", "train", "eval", "saliency", "words")
SEEDED_COMMANDS = ("synth", "build-dataset", "train")
SECTIONS = {
    "train": "train",
    "split": "split",
    "saliency": "occlusion",
    "synth": "synth",
}
_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")

PathLike = Union[str, Path]


@dataclass
class RunConfig:
    seed: Optional[int] = None
    out_dir: str = "out"
    corpus_dir: Optional[str] = None
    lexicon_path: Optional[str] = None
    concepts: Tuple[str, ...] = CONCEPTS
    jobs: int = 1
    layout: str = "single"
    input_side: Optional[int] = None
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    occlusion: OcclusionConfig = field(default_factory=OcclusionConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)

    @property
    def out_path(self) -> Path:
        return Path(self.out_dir)

    @property
    def corpus_path(self) -> Path:
        return Path(self.corpus_dir) if self.corpus_dir else self.out_path / "corpus"

    @property
    def datasets_path(self) -> Path:
        return self.out_path / "datasets"

    @property
    def models_path(self) -> Path:
        return self.out_path / "models"

    @property
    def reports_path(self) -> Path:
        return self.out_path / "reports"

    def manifest_path(self, concept: str) -> Path:
        return self.datasets_path / f"{concept}.tsv"

    def checkpoint_path(self, concept: str) -> Path:
        return self.models_path / f"{concept}.nwc"

    def history_path(self, concept: str) -> Path:
        return self.models_path / f"{concept}_history.tsv"

    def build_topology(self) -> NetworkTopology:
        kwargs: Dict[str, Any] = {
            "literal_final_relu": self.train.literal_final_relu,
            "literal_output_dropout": self.train.literal_output_dropout,
        }
        if self.input_side is not None:
            kwargs["input_side"] = self.input_side
        return presets.build(self.train.topology, **kwargs)

    def lexicon(self) -> LexiconTables:
        return load_lexicon(self.lexicon_path)

    def seeded(self) -> "RunConfig":
        """Copy whose stage seeds follow the run seed"""
        if self.seed is None:
            return self
        return dataclasses.replace(
            self,
            train=dataclasses.replace(self.train, seed=self.seed),
            split=dataclasses.replace(self.split, seed=self.seed),
            synth=dataclasses.replace(self.synth, seed=self.seed),
        )

    def validate(self, command: str, inputs: Sequence[PathLike] = ()) -> "ValidationReport":
        report = ConfigValidator(self).validate(command, inputs)
        for warning in report.warnings:
            logger.warning(warning)
        if report.errors:
            raise ConfigError("invalid configuration:\n  " + "\n  ".join(report.errors))
        return report


@dataclass
class ValidationReport:
    errors: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.errors


class ConfigValidator:
    """Collects every problem of a RunConfig for one command"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.errors: List[str] = []
        self.warnings: List[str] = []

    def validate(self, command: str, inputs: Sequence[PathLike] = ()) -> ValidationReport:
        self.errors = []
        self.warnings = []
        if command not in COMMANDS:
            self.errors.append(f"unknown command '{command}'")
            return ValidationReport(self.errors, self.warnings)

        if command in SEEDED_COMMANDS and self.config.seed is None:
            self.errors.append(f"a seed is required for '{command}' (--seed or seed = N)")
        self._validate_jobs()
        self._validate_lexicon(command)
        if command in ("train", "eval", "saliency"):
            self._validate_topology()
        if command == "synth":
            self._validate_synth()
        if command in ("build-dataset", "words") and not self.config.corpus_path.is_dir():
            self.errors.append(f"corpus directory not found: {self.config.corpus_path}")
        for path in inputs:
            if not Path(path).exists():
                self.errors.append(f"input not found: {path}")
        return ValidationReport(self.errors, self.warnings)

    def _validate_jobs(self):
        if self.config.jobs < 1:
            self.errors.append(f"jobs must be >= 1, got {self.config.jobs}")
        elif self.config.jobs > (os.cpu_count() or 1):
            self.warnings.append(
                f"jobs = {self.config.jobs} exceeds the {os.cpu_count()} available CPUs")

    def _validate_lexicon(self, command: str):
        if self.config.lexicon_path and not Path(self.config.lexicon_path).is_file():
            self.errors.append(f"lexicon file not found: {self.config.lexicon_path}")
            return
        if not self.config.concepts:
            self.errors.append("at least one concept must be configured")
            return
        try:
            known = set(self.config.lexicon().concepts())
        except ConfigError as e:
            self.errors.append(str(e))
            return
        missing = [c for c in self.config.concepts if c not in known]
        if missing:
            self.errors.append(f"concept(s) not in the lexicon: {', '.join(missing)}")
        if command == "synth":
            missing = [c for c in self.config.synth.concepts if c not in known]
            if missing:
                self.errors.append(f"synth concept(s) not in the lexicon: {', '.join(missing)}")

    def _validate_topology(self):
        try:
            topology = self.config.build_topology()
        except ConfigError as e:
            self.errors.append(str(e))
            return
        side = topology.input_shape[0]
        for k in self.config.occlusion.scaled(side).kernel_sizes:
            if k > side:
                self.errors.append(f"occlusion kernel {k} exceeds the {side}px input")
        if self.config.train.topology == "mini" and self.config.train.lr < 1e-3:
            self.warnings.append(
                f"train.lr = {self.config.train.lr} converges slowly on the mini topology")

    def _validate_synth(self):
        if self.config.synth.label_noise_rate > 0.5:
            self.warnings.append("synth.label_noise_rate above 0.5 makes most labels wrong")


def _coerce(value: str, target: Any, key: str) -> Any:
    """Convert a raw string to the annotated field type"""
    origin = getattr(target, "__origin__", None)
    args = getattr(target, "__args__", ())
    if origin is Union:
        inner = [a for a in args if a is not type(None)]
        if value.lower() in ("", "none"):
            return None
        return _coerce(value, inner[0], key)
    if origin in (tuple, Tuple):
        item_type = args[0] if args else str
        items = [v.strip() for v in value.split(",") if v.strip()]
        return tuple(_coerce(v, item_type, key) for v in items)
    if target is bool:
        lowered = value.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got '{value}'")
    if target in (int, float):
        try:
            return target(value)
        except ValueError:
            raise ConfigError(f"{key}: expected {target.__name__}, got '{value}'")
    return value


_SECTION_FIELDS = {"train", "split", "occlusion", "synth"}


def _field_types(cls) -> Dict[str, Any]:
    return get_type_hints(cls)


def apply_settings(config: RunConfig, settings: Iterable[Tuple[str, str]],
                   source: str = "") -> Tuple[RunConfig, List[str]]:
    """Apply raw key/value pairs; returns the new config and any errors

    Each section is rebuilt once so its cross-field checks see every value.
    """
    errors: List[str] = []
    top_types = _field_types(RunConfig)
    top: Dict[str, Any] = {}
    sections: Dict[str, Dict[str, Any]] = {}
    for key, raw in settings:
        where = f"{source}: {key}" if source else key
        section, _, name = key.rpartition(".")
        try:
            if section:
                attr = SECTIONS.get(section)
                if attr is None:
                    raise ConfigError(f"unknown section '{section}'")
                types = _field_types(type(getattr(config, attr)))
                if name not in types:
                    raise ConfigError("unknown key")
                sections.setdefault(attr, {})[name] = _coerce(raw, types[name], where)
            else:
                if name not in top_types or name in _SECTION_FIELDS:
                    raise ConfigError("unknown key")
                top[name] = _coerce(raw, top_types[name], where)
        except ConfigError as e:
            message = str(e)
            errors.append(message if message.startswith(where) else f"{where}: {message}")

    for attr, values in sections.items():
        try:
            top[attr] = dataclasses.replace(getattr(config, attr), **values)
        except (ConfigError, TypeError, ValueError) as e:
            errors.append(f"{source or 'settings'}: {e}")
    return dataclasses.replace(config, **top), errors


def parse_settings(text: str, source: str = "") -> List[Tuple[str, str]]:
    settings = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        settings.append((key.strip(), value.strip()))
    return settings


def parse_override(text: str) -> Tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got '{text}'")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def load_config(path: Optional[PathLike] = None, overrides: Sequence[str] = (),
                flags: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Defaults, then the file, then --set overrides, then named flags"""
    config = RunConfig()
    errors: List[str] = []
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}")
        config, found = apply_settings(config, parse_settings(text, str(path)), str(path))
        errors.extend(found)
    config, found = apply_settings(config, [parse_override(o) for o in overrides], "--set")
    errors.extend(found)
    if flags:
        set_flags = [(k, str(v)) for k, v in flags.items() if v is not None]
        config, found = apply_settings(config, set_flags, "flag")
        errors.extend(found)
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    return config.seeded()
