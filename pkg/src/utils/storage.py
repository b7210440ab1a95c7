import csv
import json
import os
from typing import List, Sequence

from pydantic import BaseModel, ValidationError

from src.models.models import (
    BenchmarkRow, EpisodeLog, EvidenceDocument, MapDocument, MethodSummary, PosteriorDocument, Scenario,
    SensorReading,
)
from src.utils.config import get_settings
from src.utils.custom_logging import get_logger
from src.utils.errors import ConfigError

logger = get_logger(__name__)

BENCHMARK_HEADER = ["hypothesis_size", "exploration_length", "update_time_ms", "largest_clique_cost"]
COMPARE_HEADER = [
    "method", "trials", "mean_cost", "std_cost", "estimated_cost", "estimated_std",
    "success_rate", "mean_new_edges",
]


def ensure_data_dir(path: str = "") -> str:
    """Create the parent directory of `path` (or the data dir) if it doesn't exist"""
    directory = os.path.dirname(path) if path else get_settings().data_dir
    if directory:
        os.makedirs(directory, exist_ok=True)
    return directory


def _dump(model: BaseModel, filename: str) -> str:
    ensure_data_dir(filename)
    with open(filename, "w", encoding="utf-8") as f:
        json.dump(model.model_dump(mode="json"), f, indent=2, sort_keys=True)
        f.write("\n")
    return filename


def _load(model_cls, filename: str, what: str):
    if not os.path.exists(filename):
        raise ConfigError(f"{what} file not found: {filename}")
    try:
        with open(filename, "r", encoding="utf-8") as f:
            data = json.load(f)
        return model_cls.model_validate(data)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} file {filename} is not valid JSON: {e}") from e
    except ValidationError as e:
        raise ConfigError(f"{what} file {filename} is invalid: {e}") from e

# ---------- Documents ----------

def save_map(doc: MapDocument, filename: str) -> str:
    return _dump(doc, filename)


def load_map(filename: str) -> MapDocument:
    return _load(MapDocument, filename, "map")


def save_scenario(scenario: Scenario, filename: str) -> str:
    return _dump(scenario, filename)


def load_scenario(filename: str) -> Scenario:
    """Unknown keys and out-of-grid intersections are configuration errors."""
    return _load(Scenario, filename, "scenario")


def save_evidence(readings: Sequence[SensorReading], filename: str) -> str:
    return _dump(EvidenceDocument(readings=list(readings)), filename)


def load_evidence(filename: str) -> List[SensorReading]:
    return _load(EvidenceDocument, filename, "evidence").readings


def save_episode_log(log: EpisodeLog, filename: str) -> str:
    logger.info(f"writing episode log ({len(log.records)} records) to {filename}")
    return _dump(log, filename)


def load_episode_log(filename: str) -> EpisodeLog:
    return _load(EpisodeLog, filename, "episode log")


def save_posterior(doc: PosteriorDocument, filename: str) -> str:
    return _dump(doc, filename)

# ---------- Tables ----------

def _write_csv(rows: Sequence[BaseModel], header: List[str], filename: str) -> str:
    ensure_data_dir(filename)
    with open(filename, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            data = row.model_dump(mode="json")
            writer.writerow(["" if data[k] is None else data[k] for k in header])
    return filename


def save_benchmark_csv(rows: Sequence[BenchmarkRow], filename: str) -> str:
    return _write_csv(rows, BENCHMARK_HEADER, filename)


def load_benchmark_csv(filename: str) -> List[BenchmarkRow]:
    with open(filename, "r", encoding="utf-8", newline="") as f:
        return [
            BenchmarkRow(**{k: (None if v == "" else v) for k, v in row.items()})
            for row in csv.DictReader(f)
        ]


def save_compare_csv(rows: Sequence[MethodSummary], filename: str) -> str:
    return _write_csv(rows, COMPARE_HEADER, filename)
