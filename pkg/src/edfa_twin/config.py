"""TOML run configuration: typed sections, unknown-key rejection, stable hashing."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import SplitSpec
from .errors import ConfigError
from .synth import CampaignConfig
from .train import FinetuneConfig, PretrainConfig
from .transfer import HeteroTlConfig, HomoTlConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SEED_ENV = "EDFA_TWIN_SEED"


@dataclass(frozen=True)
class Paths:
    data: str = "data"
    checkpoints: str = "checkpoints"
    reports: str = "reports"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    paths: Paths = field(default_factory=Paths)
    campaign: CampaignConfig = field(default_factory=CampaignConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    homo: HomoTlConfig = field(default_factory=HomoTlConfig)
    hetero: HeteroTlConfig = field(default_factory=HeteroTlConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, section: str | None = None, **values) -> "RunConfig":
        if section is None:
            return dataclasses.replace(self, **values)
        return dataclasses.replace(self, **{section: _build(type(getattr(self, section)), section,
                                                            {**dataclasses.asdict(getattr(self, section)),
                                                             **values})})


_SECTIONS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "seed"}


def _build(cls, section: str, values: dict):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    if "gains" in values and values["gains"] is not None:
        values = dict(values, gains=tuple(float(g) for g in values["gains"]))
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{section}]: {e}") from None


def config_from_dict(doc: dict) -> RunConfig:
    unknown = sorted(set(doc) - set(_SECTIONS) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    kwargs = {}
    if "seed" in doc:
        seed = doc["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
        kwargs["seed"] = seed
    for name, f in _SECTIONS.items():
        if name in doc:
            if not isinstance(doc[name], dict):
                raise ConfigError(f"[{name}] must be a table")
            kwargs[name] = _build(f.default_factory().__class__, name, doc[name])
    return RunConfig(**kwargs)


def load_config(path=None, *, seed: int | None = None) -> RunConfig:
    """File values, then the ``EDFA_TWIN_SEED`` fallback, then an explicit ``seed`` override."""
    doc = {}
    if path is not None:
        try:
            doc = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
        except OSError as e:
            raise ConfigError(f"{path}: {e.strerror}") from None
    if "seed" not in doc and os.environ.get(SEED_ENV):
        try:
            doc["seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} is not an integer") from None
    if seed is not None:
        doc["seed"] = seed
    return config_from_dict(doc)
