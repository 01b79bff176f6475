"""INI experiment configuration and the objects it builds."""

from __future__ import annotations

import configparser
import hashlib
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .data_model import NetworkDataset, generate_synthetic, read_dataset
from .engine import Scenario
from .errors import ConfigError
from .projection import OmegaBall, suggest_omega
from .randomness import RngStream
from .schedules import ScheduleParams
from .topology import (
    NetworkGraph,
    complete_graph,
    erdos_renyi_graph,
    metropolis_weights,
    path_graph,
    read_graph,
    ring_graph,
)

logger = logging.getLogger(__name__)

SCHEDULE_KEYS = ("c_alpha", "d_alpha", "e_alpha", "c_v", "d_v", "e_v")
OUTPUT_DIR_ENV = "PRIVLINREG_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"

Sections = Dict[str, Dict[str, str]]


def _split_list(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def parse_floats(value: str) -> List[float]:
    """Comma separated numbers; ``inf`` is accepted."""
    try:
        return [float(item) for item in _split_list(value)]
    except ValueError as exc:
        raise ConfigError(f"Expected a comma separated list of numbers, got {value!r}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    """Sectioned key/value configuration with a stable content hash.

    Keys are stored lowercased with trimmed values. ``base_dir`` resolves
    relative file paths and does not take part in the hash.
    """

    sections: Sections
    base_dir: Path = field(default=Path("."), compare=False)

    @classmethod
    def from_mapping(
        cls, sections: Mapping[str, Mapping[str, object]], base_dir: Union[str, Path] = "."
    ) -> "ExperimentConfig":
        normalized = {
            str(name).strip().lower(): {
                str(key).strip().lower(): str(value).strip() for key, value in values.items()
            }
            for name, values in sections.items()
        }
        return cls(normalized, Path(base_dir))

    @classmethod
    def from_string(cls, text: str, base_dir: Union[str, Path] = ".") -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"Malformed configuration: {exc}") from exc
        return cls.from_mapping(
            {name: dict(parser.items(name)) for name in parser.sections()}, base_dir
        )

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Configuration file {path} not found")
        logger.debug(f"Reading configuration from {path}")
        return cls.from_string(path.read_text(), base_dir=path.parent)

    def canonical_text(self) -> str:
        lines = []
        for name in sorted(self.sections):
            lines.append(f"[{name}]")
            for key in sorted(self.sections[name]):
                lines.append(f"{key}={self.sections[name][key]}")
        return "\n".join(lines) + "\n"

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()

    def with_overrides(self, section: str, **values: object) -> "ExperimentConfig":
        """Copy with ``values`` merged into ``section`` (``None`` values skipped)."""
        sections = {name: dict(entries) for name, entries in self.sections.items()}
        updates = {
            key.lower(): str(value).strip() for key, value in values.items() if value is not None
        }
        if updates:
            sections.setdefault(section.lower(), {}).update(updates)
        return ExperimentConfig(sections, self.base_dir)

    # --- raw access -------------------------------------------------------

    def get(self, section: str, key: str, default: Optional[str] = None) -> str:
        value = self.sections.get(section, {}).get(key)
        if value is None or value == "":
            if default is None:
                raise ConfigError(f"Missing required key [{section}] {key}")
            return default
        return value

    def has(self, section: str, key: str) -> bool:
        return bool(self.sections.get(section, {}).get(key))

    def get_int(self, section: str, key: str, default: Optional[int] = None) -> int:
        raw = self.get(section, key, None if default is None else str(default))
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} must be an integer, got {raw!r}") from exc

    def get_float(self, section: str, key: str, default: Optional[float] = None) -> float:
        raw = self.get(section, key, None if default is None else repr(default))
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} must be a number, got {raw!r}") from exc

    def resolve_path(self, raw: str) -> Path:
        path = Path(raw)
        return path if path.is_absolute() else self.base_dir / path

    # --- builders ---------------------------------------------------------

    def build_graph(self) -> NetworkGraph:
        kind = self.get("graph", "kind").lower()
        if kind == "file":
            return read_graph(self.resolve_path(self.get("graph", "path")))
        nodes = self.get_int("graph", "nodes")
        if kind == "path":
            return path_graph(nodes)
        if kind == "ring":
            return ring_graph(nodes)
        if kind == "complete":
            return complete_graph(nodes)
        if kind == "erdos_renyi":
            return erdos_renyi_graph(
                nodes, self.get_float("graph", "probability"), self.get_int("graph", "seed", 0)
            )
        raise ConfigError(f"Unknown graph kind {kind!r}")

    def build_dataset(self, k: int) -> NetworkDataset:
        kind = self.get("data", "kind", "synthetic").lower()
        if kind == "file":
            dataset = read_dataset(self.resolve_path(self.get("data", "path")))
            if dataset.k != k:
                raise ConfigError(f"Dataset file has {dataset.k} nodes, graph has {k}")
            return dataset
        if kind != "synthetic":
            raise ConfigError(f"Unknown data kind {kind!r}")

        m = self.get_int("data", "features")
        rows = [int(value) for value in parse_floats(self.get("data", "rows"))]
        if len(rows) == 1:
            rows = rows * k
        seed = self.get_int("data", "seed", self.seed)
        if self.has("data", "ground_truth"):
            ground_truth = np.array(parse_floats(self.get("data", "ground_truth")))
        else:
            ground_truth = RngStream(seed, 0, "ground-truth").standard_normal(m)
        cap = None
        if self.has("data", "design_norm_cap"):
            cap = self.get_float("data", "design_norm_cap")
        return generate_synthetic(
            k,
            rows,
            m,
            ground_truth,
            self.get_float("data", "label_noise", 0.0),
            seed,
            design_norm_cap=cap,
        )

    def schedule_grid(self) -> Dict[str, List[float]]:
        return {key: parse_floats(self.get("schedule", key)) for key in SCHEDULE_KEYS}

    def schedule_params(self) -> ScheduleParams:
        """First listed value of every schedule key."""
        return ScheduleParams(**{key: values[0] for key, values in self.schedule_grid().items()})

    def build_region(self, dataset: NetworkDataset) -> OmegaBall:
        raw = self.get("omega", "omega_radius", "auto").lower()
        if raw == "auto":
            return suggest_omega(dataset, self.get_float("omega", "omega_slack", 1.0))
        radius = math.inf if raw == "inf" else self.get_float("omega", "omega_radius")
        if self.has("omega", "omega_center"):
            center = np.array(parse_floats(self.get("omega", "omega_center")))
        else:
            center = np.zeros(dataset.m)
        return OmegaBall(center, radius)

    def build_init(self, k: int, m: int) -> np.ndarray:
        values = parse_floats(self.get("run", "init", "0"))
        if len(values) not in (1, m):
            raise ConfigError(f"[run] init needs 1 or {m} values, got {len(values)}")
        return np.broadcast_to(np.array(values, dtype=float), (k, m)).copy()

    def build_scenario(self) -> Scenario:
        graph = self.build_graph()
        dataset = self.build_dataset(graph.k)
        logger.info(
            f"Built scenario: k={graph.k}, m={dataset.m}, n={dataset.n}, "
            f"{len(graph.edges)} edges"
        )
        return Scenario(
            dataset=dataset,
            graph=graph,
            weights=metropolis_weights(graph),
            params=self.schedule_params(),
            region=self.build_region(dataset),
            rounds=self.rounds,
            init=self.build_init(graph.k, dataset.m),
        )

    # --- run settings -----------------------------------------------------

    @property
    def rounds(self) -> int:
        return self.get_int("run", "rounds")

    @property
    def trials(self) -> int:
        return self.get_int("run", "trials", 1)

    @property
    def seed(self) -> int:
        return self.get_int("run", "seed", 0)

    @property
    def seeds(self) -> List[int]:
        """Trial r uses master seed ``seed + r``."""
        return [self.seed + r for r in range(self.trials)]

    @property
    def workers(self) -> int:
        return self.get_int("run", "workers", 1)

    @property
    def error_threshold(self) -> Optional[float]:
        if not self.has("run", "error_threshold"):
            return None
        return self.get_float("run", "error_threshold")

    def output_dir(self, flag: Optional[str] = None) -> Path:
        if flag:
            return Path(flag)
        if self.has("run", "output_dir"):
            return self.resolve_path(self.get("run", "output_dir"))
        return Path(os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)

    def audit_settings(self) -> Tuple[int, str]:
        return self.get_int("audit", "node", 1), self.get("audit", "perturbation", "negate-labels")

    def envelope_settings(self) -> Tuple[Tuple[int, int], Tuple[int, int], float]:
        fit = [int(v) for v in parse_floats(self.get("envelope", "fit_window"))]
        test = [int(v) for v in parse_floats(self.get("envelope", "test_window"))]
        if len(fit) != 2 or len(test) != 2:
            raise ConfigError("[envelope] windows must be given as 'start, stop'")
        return (fit[0], fit[1]), (test[0], test[1]), self.get_float("envelope", "slack", 2.0)
