import json
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..artifacts import ArtifactCache, cache_key, canonical_json, write_text_atomic
from ..config import RunConfig
from ..errors import ConicLNError, StageError
from .base.base_stage import BaseStage, RunContext
from .factory import StageFactory

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class PipelineManager:
    """
    Manager class for pipeline stage instances.

    Runs a command together with every stage it depends on, reusing cached
    stage results, and writes a deterministic run manifest.
    """

    def __init__(self, config: RunConfig, out_dir: Path, cache_dir: Optional[Path] = None):
        """
        Initialize the pipeline manager.

        Args:
            config: Validated run configuration.
            out_dir: Directory receiving the artifacts.
            cache_dir: Stage cache directory; None disables caching.
        """
        self.config = config
        self.out_dir = Path(out_dir)
        self.cache = ArtifactCache(Path(cache_dir)) if cache_dir is not None else None
        self.stages: Dict[str, BaseStage] = {}

    def initialize_stage(self, stage_type: str) -> BaseStage:
        """
        Initialize a stage instance.

        Raises:
            ValueError: If the stage is not registered.
        """
        if stage_type not in self.stages:
            self.stages[stage_type] = StageFactory.create_stage(stage_type)
        return self.stages[stage_type]

    def plan(self, command: str) -> List[str]:
        """Stages to run for command, prerequisites first."""
        order: List[str] = []

        def visit(name: str, trail: tuple) -> None:
            if name in trail:
                raise ValueError(f"stage dependency cycle: {' -> '.join(trail + (name,))}")
            if name in order:
                return
            for required in self.initialize_stage(name).prerequisites(self.config):
                visit(required, trail + (name,))
            order.append(name)

        visit(command, ())
        return order

    def stage_key(self, name: str) -> str:
        return cache_key(name, {"config": json.loads(self.config.effective())})

    def run_command(self, command: str) -> RunContext:
        """
        Run command and its prerequisites, writing artifacts and the manifest.

        Raises:
            ValueError: If the command is not a registered stage.
            StageError: Wrapping the first stage failure; the manifest is
                written with complete = false before it propagates.
        """
        context = RunContext(config=self.config, out_dir=self.out_dir, cache=self.cache)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        for name in self.plan(command):
            try:
                self._execute(self.stages[name], context)
            except ConicLNError as e:
                context.records.append({"stage": name, "status": "failed", "error": f"{type(e).__name__}: {e}"})
                self.write_manifest(command, context, complete=False)
                raise StageError(name, e) from e
        self.write_manifest(command, context, complete=True)
        return context

    def _execute(self, stage: BaseStage, context: RunContext) -> None:
        started = time.perf_counter()
        logger.info("stage %s: start", stage.name)
        result, cached = self._load_cached(stage, context), True
        if result is None:
            cached = False
            result = stage.run(context)
            payload = stage.to_payload(result)
            if payload is not None and self.cache is not None:
                self.cache.store(self.stage_key(stage.name), payload)
        context.results[stage.name] = result
        summary = stage.write_artifacts(result, context)
        context.records.append({"stage": stage.name, "status": "ok", "summary": summary})
        elapsed = time.perf_counter() - started
        context.timings.append({"stage": stage.name, "elapsed_s": elapsed, "cached": cached})
        logger.info("stage %s: done in %.2fs%s", stage.name, elapsed, " (cached)" if cached else "")

    def _load_cached(self, stage: BaseStage, context: RunContext) -> Optional[Any]:
        if self.cache is None:
            return None
        payload = self.cache.load(self.stage_key(stage.name))
        if payload is None:
            return None
        try:
            return stage.from_payload(payload, context)
        except NotImplementedError:
            return None
        except (KeyError, TypeError, ValueError) as e:
            logger.warning("cached %s result could not be rebuilt (%s); recomputing", stage.name, e)
            return None

    def write_manifest(self, command: str, context: RunContext, complete: bool) -> Path:
        """Deterministic manifest: effective config, seed, per-stage summaries."""
        summaries = {r["stage"]: r.get("summary", {}) for r in context.records if r["status"] == "ok"}
        solve = summaries.get("solve", {})
        manifest = {
            "command": command,
            "complete": complete,
            "config_hash": self.config.config_hash(),
            "config": json.loads(self.config.effective()),
            "seed": self.config.seed,
            "c": list(self.config.c),
            "chain": summaries.get("indexset"),
            "mu": summaries.get("expand", {}).get("mu"),
            "t0_used": solve.get("t0_used"),
            "lambda": solve.get("lambda"),
            "final_residual": solve.get("final_residual"),
            "decay_fit": solve.get("decay_fit"),
            "records": context.records,
            "artifacts": sorted(set(context.artifacts)),
        }
        return write_text_atomic(self.out_dir / MANIFEST_NAME, canonical_json(manifest))
