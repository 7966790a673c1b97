"""Pipeline configuration and dataset manifests."""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .embed import EMBEDDERS
from .embed.checkpoint import config_hash
from .gin import GINClassifier, MeanPoolDNNClassifier

logger = logging.getLogger(__name__)

__all__ = ["ConfigError", "PipelineConfig", "DatasetManifest", "load_manifest", "ATTACK_DEFAULTS"]

ATTACK_DEFAULTS = {
    "method": "gradargmax",
    "budgets": [0, 10, 100, 1000],
    "max_queries": 1000,
    "population": 100,
    "generations": 10,
    "mutation_rate": 0.1,
    "sigma": None,
    "k": 10,
}

_TOP_KEYS = {"seed", "scheme", "embed", "classifier", "gin", "dnn", "attack"}


class ConfigError(ValueError):
    pass


def _check_keys(section: str, given: Mapping, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")


@dataclass
class PipelineConfig:
    seed: int = 0
    scheme: str = "cbow"
    classifier: str = "gin"
    embed: dict | None = None
    gin: dict | None = None
    dnn: dict | None = None
    attack: dict | None = None

    def __post_init__(self):
        self.embed = dict(self.embed or {})
        self.gin = dict(self.gin or {})
        self.dnn = dict(self.dnn or {})
        self.attack = {**ATTACK_DEFAULTS, **(self.attack or {})}
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.scheme not in EMBEDDERS:
            raise ConfigError(f"scheme must be one of {sorted(EMBEDDERS)}, got {self.scheme!r}")
        if self.classifier not in ("gin", "dnn"):
            raise ConfigError(f"classifier must be 'gin' or 'dnn', got {self.classifier!r}")
        _check_keys("embed", self.embed, EMBEDDERS[self.scheme]().get_params())
        _check_keys("gin", self.gin, GINClassifier().get_params())
        _check_keys("dnn", self.dnn, MeanPoolDNNClassifier().get_params())
        _check_keys("attack", self.attack, ATTACK_DEFAULTS)
        if self.attack["method"] not in ("gradargmax", "genetic", "random_noise"):
            raise ConfigError(f"unknown attack method {self.attack['method']!r}")
        try:
            self.make_embedder()._validate_params()
            self.make_classifier()._validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("configuration must be a JSON object")
        _check_keys("configuration", data, _TOP_KEYS)
        return cls(**copy.deepcopy(dict(data)))

    @classmethod
    def load(cls, path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> "PipelineConfig":
        data: dict = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
            if not isinstance(data, dict):
                raise ConfigError("configuration must be a JSON object")
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            section, _, name = key.partition(".")
            if name:
                data.setdefault(section, {})[name] = value
            else:
                data[section] = value
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "scheme": self.scheme, "classifier": self.classifier,
                "embed": self.embed, "gin": self.gin, "dnn": self.dnn, "attack": self.attack}

    def digest(self) -> str:
        return config_hash(self.to_dict())

    def make_embedder(self):
        params = {"random_state": self.seed, **self.embed}
        return EMBEDDERS[self.scheme](**params)

    def make_classifier(self):
        if self.classifier == "gin":
            return GINClassifier(**{"random_state": self.seed, **self.gin})
        params = {"random_state": self.seed, **self.dnn}
        if "hidden" in params:
            params["hidden"] = tuple(params["hidden"])
        return MeanPoolDNNClassifier(**params)


# ---------------------------------------------------------------------------
# manifests


_LABELS = {"benign": 0, "0": 0, "malicious": 1, "1": 1}


@dataclass(frozen=True)
class DatasetManifest:
    """Labeled files with their MD5 digests; no digest occurs twice."""

    entries: tuple[tuple[Path, int, str], ...]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def paths(self) -> list[Path]:
        return [p for p, _, _ in self.entries]

    @property
    def labels(self) -> list[int]:
        return [y for _, y, _ in self.entries]


def _md5(path: Path) -> str:
    return hashlib.md5(path.read_bytes()).hexdigest()


def _dedupe(items: list[tuple[Path, int]]) -> DatasetManifest:
    seen: dict[str, tuple[Path, int]] = {}
    out = []
    for path, label in items:
        digest = _md5(path)
        if digest in seen:
            first, first_label = seen[digest]
            if first_label != label:
                raise ConfigError(f"{path} duplicates {first} with a different label")
            logger.warning("skipping %s: same content as %s", path, first)
            continue
        seen[digest] = (path, label)
        out.append((path, label, digest))
    return DatasetManifest(tuple(out))


def load_manifest(source: str | Path) -> DatasetManifest:
    """Read a ``path,label`` CSV, or a directory with ``benign/`` and ``malicious/`` subfolders.

    A ``manifest.csv`` inside the directory takes precedence over the folder layout.
    """
    source = Path(source)
    items: list[tuple[Path, int]] = []
    if source.is_dir() and (source / "manifest.csv").is_file():
        source = source / "manifest.csv"
    if source.is_dir():
        for name, label in (("benign", 0), ("malicious", 1)):
            folder = source / name
            if folder.is_dir():
                items += [(p, label) for p in sorted(folder.rglob("*")) if p.is_file()]
        if not items:
            raise ConfigError(f"{source} has no files under benign/ or malicious/")
        return _dedupe(items)
    with open(source, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"path", "label"} <= set(reader.fieldnames):
            raise ConfigError(f"{source}: manifest needs 'path' and 'label' columns")
        for row in reader:
            label = _LABELS.get(row["label"].strip().lower())
            if label is None:
                raise ConfigError(f"{source}: unknown label {row['label']!r}")
            path = Path(row["path"])
            items.append((path if path.is_absolute() else source.parent / path, label))
    if not items:
        raise ConfigError(f"{source} lists no files")
    return _dedupe(items)
