"""Run configuration: defaults, strict loading from YAML/dicts, and echoing."""
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .errors import ConfigurationError
from .gcld.train import GcldHyper
from .scenario import OVERLAP_POLICIES, parse_umda_matrix

PSEUDO_MODES = ("phl", "psl")
MVD_VIEWS = ("both", "source", "target")


@dataclass
class ScenarioConfig:
    umda_matrix: list = field(default_factory=lambda: [[4, 4, 4, 10], [2, 2, 2, 5]])
    dim: int = 16
    n_per_class: int = 100
    shift_strength: float = 0.5
    noise_std: float = 0.3
    anchor_distance: float = 4.0
    overlap_policy: str = "random"

    def validate(self):
        parse_umda_matrix(self.umda_matrix)
        if self.overlap_policy not in OVERLAP_POLICIES:
            raise ConfigurationError(f"overlap_policy must be one of {OVERLAP_POLICIES}")
        if self.dim < 2 or self.n_per_class < 1:
            raise ConfigurationError("dim must be >= 2 and n_per_class >= 1")
        if not 0.0 <= self.shift_strength <= 1.0 or self.noise_std < 0 or self.anchor_distance <= 0:
            raise ConfigurationError("shift_strength in [0, 1], noise_std >= 0, anchor_distance > 0")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    beta: float = 0.01
    tau: float = 0.07
    gamma: float = 0.99
    delta: float = 0.9
    sigma: float = 0.5
    phi: float = 0.9
    queue_size: int = 512
    key_momentum: float = 0.999
    aug_noise: float = 0.1
    aug_drop: float = 0.1
    bank_temperature: float = 0.07
    hidden: int = 64
    embed_dim: int = 128

    def hyper(self, use_gcld: bool) -> GcldHyper:
        names = {f.name for f in fields(GcldHyper)}
        return GcldHyper(use_gcld=use_gcld, **{k: v for k, v in asdict(self).items() if k in names})


@dataclass
class FederationConfig:
    rounds: float = 1.0  # communication events per epoch
    lam: float = 0.4
    source_hidden: int = 32
    source_lr: float = 0.05
    source_batch_size: int = 32
    source_initial_steps: int = 20
    source_steps_per_round: int = 5

    def validate(self):
        if self.rounds <= 0:
            raise ConfigurationError("rounds must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigurationError("lam must lie in [0, 1]")
        if self.source_initial_steps < 0 or self.source_steps_per_round < 0:
            raise ConfigurationError("source step budgets must be non-negative")


@dataclass
class ModeConfig:
    pseudo: str = "phl"
    gcld: bool = True
    mvd: bool = True
    mvd_view: str = "both"
    sfda: bool = False

    def validate(self):
        if self.pseudo not in PSEUDO_MODES:
            raise ConfigurationError(f"pseudo must be one of {PSEUDO_MODES}")
        if self.mvd_view not in MVD_VIEWS:
            raise ConfigurationError(f"mvd_view must be one of {MVD_VIEWS}")


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    federation: FederationConfig = field(default_factory=FederationConfig)
    modes: ModeConfig = field(default_factory=ModeConfig)
    seed: int = 0
    dump_pseudo_labels: bool = False

    def validate(self) -> "RunConfig":
        self.scenario.validate()
        self.train.hyper(self.modes.gcld)
        self.federation.validate()
        self.modes.validate()
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **sections) -> "RunConfig":
        """Copy with some fields replaced, e.g. ``modes={"mvd": False}, seed=3``."""
        out = replace(self)
        for name, value in sections.items():
            if isinstance(value, dict):
                setattr(out, name, replace(getattr(self, name), **_check_keys(getattr(self, name), value, name)))
            else:
                setattr(out, name, value)
        return out.validate()


SECTIONS = {"scenario": ScenarioConfig, "train": TrainConfig, "federation": FederationConfig,
            "modes": ModeConfig}


def _check_keys(obj_or_cls, data: dict, where: str) -> dict:
    known = {f.name for f in fields(obj_or_cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return data


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data or {})
    _check_keys(RunConfig, data, "config")
    kwargs = {}
    for name, value in data.items():
        if name in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigurationError(f"section {name!r} must be a mapping")
            kwargs[name] = SECTIONS[name](**_check_keys(SECTIONS[name], value, name))
        else:
            kwargs[name] = value
    return RunConfig(**kwargs).validate()


def load_config(path) -> RunConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigurationError("config file must hold a mapping")
    return config_from_dict(data)


def dump_config(config: RunConfig, path):
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))
