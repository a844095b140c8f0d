import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from ...artifacts import ArtifactCache, canonical_json, csv_text, write_text_atomic
from ...config import RunConfig

logger = logging.getLogger(__name__)


@dataclass
class RunContext:
    """
    Everything a stage sees while it runs.

    Attributes:
        config: Validated run configuration.
        out_dir: Directory receiving the artifacts.
        cache: Stage cache, or None when caching is disabled.
        results: Domain objects produced so far, keyed by stage name.
        records: Deterministic per-stage records for the manifest.
        timings: Wall-clock and cache information (kept out of the manifest).
    """

    config: RunConfig
    out_dir: Path
    cache: Optional[ArtifactCache] = None
    results: Dict[str, Any] = field(default_factory=dict)
    records: List[Dict[str, Any]] = field(default_factory=list)
    timings: List[Dict[str, Any]] = field(default_factory=list)
    artifacts: List[str] = field(default_factory=list)

    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    def write_json(self, name: str, value: Dict[str, Any]) -> Path:
        """Write a JSON artifact with the effective config hash embedded."""
        document = dict(value)
        document["config_hash"] = self.config_hash
        path = write_text_atomic(self.out_dir / name, canonical_json(document))
        self.artifacts.append(name)
        return path

    def write_csv(
        self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]
    ) -> Path:
        """Write a CSV artifact preceded by a '# config_hash:' comment line."""
        text = f"# config_hash: {self.config_hash}\n" + csv_text(header, rows)
        path = write_text_atomic(self.out_dir / name, text)
        self.artifacts.append(name)
        return path


class BaseStage(ABC):
    """
    BaseStage is an abstract base class that defines the interface for all
    pipeline stages. A stage turns the results of the stages it requires into
    one domain object, writes its artifacts, and can round-trip that object
    through a JSON payload for the cache.
    """

    name: str = ""
    requires: Tuple[str, ...] = ()

    @abstractmethod
    def run(self, context: RunContext) -> Any:
        """
        Compute the stage result from the context.

        Args:
            context: Run context holding the config and upstream results.

        Returns:
            The stage's domain object.
        """
        pass

    @abstractmethod
    def write_artifacts(self, result: Any, context: RunContext) -> Dict[str, Any]:
        """
        Write the stage's artifacts.

        Returns:
            A deterministic summary recorded in the run manifest.
        """
        pass

    def prerequisites(self, config: RunConfig) -> Tuple[str, ...]:
        """Stages that must run first for this config."""
        return self.requires

    def to_payload(self, result: Any) -> Optional[Dict[str, Any]]:
        """
        JSON payload for the cache; None disables caching for the stage.
        """
        return None

    def from_payload(self, payload: Dict[str, Any], context: RunContext) -> Any:
        raise NotImplementedError(f"stage {self.name} is not cacheable")

    def get_capabilities(self) -> List[str]:
        """
        Names of the artifacts the stage writes, listed by `conic-ln stages`.
        """
        return []
