"""Run configuration: a declarative description of one experiment.

Configs load from a TOML file (see the README for the documented syntax)
or build programmatically via default_config(). Random seeds are split by
purpose so crypto randomness never perturbs training trajectories.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .datasets import NoiseSpec, PartitionPlan
from .errors import ConfigError
from .models import ModelSpec, TrainConfig

MODES = ("filtered", "nofilter", "centralized", "standalone")
FULL_KEY_BITS = 1024


def derive_seed(root: int, label: str) -> int:
    """Stable sub-seed for a named random stream."""
    digest = hashlib.sha256(f"{root}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class Seeds:
    data: int = 42
    init: int = 43
    crypto: int = 44


@dataclass(frozen=True)
class PlateauRule:
    """Optional early stop: no test-error improvement beyond min_delta for
    `patience` consecutive rounds."""

    enabled: bool = False
    patience: int = 10
    min_delta: float = 1e-4

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigError("plateau.patience must be >= 1")
        if self.min_delta < 0:
            raise ConfigError("plateau.min_delta must be >= 0")


@dataclass(frozen=True)
class ThresholdSchedule:
    """Similarity cutoff per round: fixed, stepped upward, or disabled.

    The "off" mode exists only for the no-filter baseline and pins the
    cutoff at -1 so every reporting participant is included.
    """

    mode: str = "fixed"
    value: float = 0.92
    start: float = 0.1
    end: float = 0.7
    step: float = 0.1
    rounds_per_step: int = 100

    def __post_init__(self):
        if self.mode not in ("fixed", "stepped", "off"):
            raise ConfigError(f"threshold.mode must be fixed or stepped (got {self.mode!r})")
        if self.mode == "fixed" and not -1.0 < self.value < 1.0:
            raise ConfigError("threshold.value must be in (-1, 1)")
        if self.mode == "stepped":
            if not (-1.0 < self.start <= self.end < 1.0):
                raise ConfigError("threshold.start/end must satisfy -1 < start <= end < 1")
            if self.step < 0:
                raise ConfigError("threshold.step must be >= 0")
            if self.rounds_per_step < 1:
                raise ConfigError("threshold.rounds_per_step must be >= 1")

    def value_at(self, round_index: int) -> float:
        if self.mode == "off":
            return -1.0
        if self.mode == "fixed":
            return self.value
        steps = (round_index - 1) // self.rounds_per_step
        return min(self.end, self.start + self.step * steps)


@dataclass(frozen=True)
class DataConfig:
    """Clean-data source and synthetic generator knobs.

    shard_class_alpha > 0 gives parties non-identical class mixes
    (Dirichlet concentration; smaller is more skewed, 0 disables).
    """

    source: str = "synthetic"
    class_separation: float = 3.2
    cluster_std: float = 1.0
    shard_class_alpha: float = 2.0
    normalize: bool = False
    images_path: str = ""
    labels_path: str = ""

    def __post_init__(self):
        if self.source not in ("synthetic", "idx"):
            raise ConfigError(f"data.source must be synthetic or idx (got {self.source!r})")
        if self.source == "idx" and not (self.images_path and self.labels_path):
            raise ConfigError("data.images_path and data.labels_path required for idx source")
        if self.shard_class_alpha < 0:
            raise ConfigError("data.shard_class_alpha must be >= 0")


@dataclass(frozen=True)
class TrainingRunConfig:
    """Everything needed to reproduce one experiment end to end."""

    mode: str = "filtered"
    max_rounds: int = 30
    key_bits: int = 256
    scale_bits: int = 32
    blind_bits: int = 20
    literal_averaging_exponent: bool = False
    adversary: str = "none"
    barrier_timeout_s: float = 0.0
    parallel: bool = True
    seeds: Seeds = field(default_factory=Seeds)
    plateau: PlateauRule = field(default_factory=PlateauRule)
    model: ModelSpec = field(
        default_factory=lambda: ModelSpec(kind="logistic", input_dim=20, num_classes=4)
    )
    train: TrainConfig = field(
        default_factory=lambda: TrainConfig(
            learning_rate=0.04, batch_size=32, local_epochs_per_round=5
        )
    )
    data: DataConfig = field(default_factory=DataConfig)
    noise: NoiseSpec = field(
        default_factory=lambda: NoiseSpec(
            shift=5.0, feature_scale=5.0, cluster_count=4,
            label_policy="cluster_consistent",
        )
    )
    partition: PartitionPlan = field(
        default_factory=lambda: PartitionPlan(
            initiator_size=400,
            initiator_test_size=400,
            rp_count=2,
            rp_size=400,
            rp_test_size=400,
            up_count=1,
            up_clean_size=200,
            up_noise_size=200,
            up_clean_test_size=50,
            up_noise_test_size=50,
        )
    )
    threshold: ThresholdSchedule = field(default_factory=ThresholdSchedule)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"run.mode must be one of {MODES} (got {self.mode!r})")
        if self.max_rounds < 0:
            raise ConfigError("run.max_rounds must be >= 0")
        if self.key_bits < 64:
            raise ConfigError("run.key_bits must be >= 64")
        if not 8 <= self.scale_bits <= 56:
            raise ConfigError("run.scale_bits must be in [8, 56]")
        if not 2 <= self.blind_bits <= 48:
            raise ConfigError("run.blind_bits must be in [2, 48]")
        if self.adversary not in ("none", "random_weights"):
            raise ConfigError("run.adversary must be none or random_weights")
        if self.barrier_timeout_s < 0:
            raise ConfigError("run.barrier_timeout_s must be >= 0")

    @property
    def participant_ids(self) -> tuple:
        rps = tuple(f"rp{i + 1}" for i in range(self.partition.rp_count))
        ups = tuple(f"up{i + 1}" for i in range(self.partition.up_count))
        return rps + ups

    def to_dict(self) -> dict:
        out = {
            "run": {
                "mode": self.mode,
                "max_rounds": self.max_rounds,
                "key_bits": self.key_bits,
                "scale_bits": self.scale_bits,
                "blind_bits": self.blind_bits,
                "literal_averaging_exponent": self.literal_averaging_exponent,
                "adversary": self.adversary,
                "barrier_timeout_s": self.barrier_timeout_s,
                "parallel": self.parallel,
            },
            "seeds": asdict(self.seeds),
            "plateau": asdict(self.plateau),
            "model": {
                "kind": self.model.kind,
                "input_dim": self.model.input_dim,
                "num_classes": self.model.num_classes,
                "hidden": [list(h) for h in self.model.hidden_layers],
                "leaky_slope": self.model.leaky_slope,
                "sigmoid_output": self.model.sigmoid_output,
            },
            "train": asdict(self.train),
            "data": asdict(self.data),
            "noise": asdict(self.noise),
            "partition": asdict(self.partition),
            "threshold": asdict(self.threshold),
        }
        return out


def default_config(**overrides) -> TrainingRunConfig:
    """Desk-scale default experiment; keyword overrides replace top-level
    fields (e.g. mode=..., threshold=ThresholdSchedule(...))."""
    return replace(TrainingRunConfig(), **overrides)


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected a table")
    return dict(value)


def _merge(default_obj, section: dict, path: str):
    # Partial sections extend the defaults; unknown keys are named errors.
    from .errors import SimfedError

    try:
        return replace(default_obj, **section)
    except (TypeError, SimfedError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(raw: dict) -> TrainingRunConfig:
    defaults = TrainingRunConfig()
    known = {"run", "seeds", "plateau", "model", "train", "data", "noise", "partition", "threshold"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown config section")
    model_raw = _section(raw, "model")
    if "hidden" in model_raw:
        hidden = model_raw.pop("hidden")
        try:
            model_raw["hidden_layers"] = tuple((int(w), str(a)) for w, a in hidden)
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                f"model.hidden: expected [[width, activation], ...]: {exc}"
            ) from exc
    return _merge(
        defaults,
        {
            **_section(raw, "run"),
            "seeds": _merge(defaults.seeds, _section(raw, "seeds"), "seeds"),
            "plateau": _merge(defaults.plateau, _section(raw, "plateau"), "plateau"),
            "model": _merge(defaults.model, model_raw, "model"),
            "train": _merge(defaults.train, _section(raw, "train"), "train"),
            "data": _merge(defaults.data, _section(raw, "data"), "data"),
            "noise": _merge(defaults.noise, _section(raw, "noise"), "noise"),
            "partition": _merge(defaults.partition, _section(raw, "partition"), "partition"),
            "threshold": _merge(defaults.threshold, _section(raw, "threshold"), "threshold"),
        },
        "run",
    )


def load_config(
    path: str,
    *,
    mode: str | None = None,
    seed_override: int | None = None,
    paper_keys: bool = False,
) -> TrainingRunConfig:
    """Read a TOML run config, applying CLI-level overrides."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    cfg = config_from_dict(raw)
    if mode is not None:
        cfg = replace(cfg, mode=mode)
    if seed_override is not None:
        cfg = replace(
            cfg,
            seeds=Seeds(
                data=seed_override, init=seed_override + 1, crypto=seed_override + 2
            ),
        )
    if paper_keys:
        cfg = replace(cfg, key_bits=FULL_KEY_BITS)
    return cfg
