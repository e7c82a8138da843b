"""
Base Repository - Abstract base for all artifact repositories
Implements the file handling shared by JSON and CSV artifacts
"""

import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Generic, TypeVar, Union

from ..errors import ArtifactError

T = TypeVar("T")

PathLike = Union[str, Path]

logger = logging.getLogger(__name__)


class BaseRepository(Generic[T], ABC):
    """
    Abstract artifact repository

    Subclasses turn text into entities and back; this class owns the file
    access so every artifact is read and written the same way.
    """

    def __init__(self, artifact_name: str):
        self.artifact_name = artifact_name

    @abstractmethod
    def serialize(self, entity: T) -> str:
        """Text form of an entity"""

    @abstractmethod
    def deserialize(self, text: str) -> T:
        """Entity from its text form; raises ArtifactError on malformed input"""

    def save(self, entity: T, path: PathLike) -> Path:
        path = Path(path)
        try:
            if path.parent and not path.parent.exists():
                path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.serialize(entity), encoding="utf-8")
            logger.info(f"Wrote {self.artifact_name} to {path}")
            return path
        except OSError as e:
            logger.error(f"Error writing {self.artifact_name} to {path}: {e}")
            raise ArtifactError(f"cannot write {self.artifact_name} to {path}: {e}", {"path": str(path)}) from e

    def load(self, path: PathLike) -> T:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            logger.error(f"Error reading {self.artifact_name} from {path}: {e}")
            raise ArtifactError(f"cannot read {self.artifact_name} from {path}: {e}", {"path": str(path)}) from e
        try:
            entity = self.deserialize(text)
        except ArtifactError as e:
            e.context.setdefault("path", str(path))
            raise
        logger.debug(f"Loaded {self.artifact_name} from {path}")
        return entity
