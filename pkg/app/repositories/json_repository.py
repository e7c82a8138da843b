"""
JSON Repository - pydantic artifacts on disk
Sorted keys and two-space indent, so write -> read -> write is byte-identical
"""

import json
import logging
from typing import Any, Optional, Type, TypeVar

from pydantic import BaseModel, TypeAdapter, ValidationError

from ..dto.market_dto import ChainSetDTO, SliceSetDTO
from ..dto.model_dto import model_artifact_adapter
from ..dto.payoff_dto import PayoffDTO
from ..errors import ArtifactError
from .base_repository import BaseRepository

D = TypeVar("D", bound=BaseModel)

logger = logging.getLogger(__name__)


def dump_artifact(dto: BaseModel) -> str:
    payload = dto.model_dump(mode="json", by_alias=True)
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"


class JsonRepository(BaseRepository[D]):
    """Repository of one DTO class stored as JSON"""

    def __init__(self, dto_class: Type[D], artifact_name: Optional[str] = None, adapter: Optional[TypeAdapter] = None):
        super().__init__(artifact_name or dto_class.__name__)
        self.adapter = adapter or TypeAdapter(dto_class)

    def serialize(self, entity: D) -> str:
        try:
            return dump_artifact(entity)
        except ValueError as e:
            raise ArtifactError(f"{self.artifact_name} holds values JSON cannot carry: {e}") from e

    def deserialize(self, text: str) -> D:
        try:
            return self.adapter.validate_python(json.loads(text))
        except json.JSONDecodeError as e:
            raise ArtifactError(f"{self.artifact_name} is not valid JSON: {e}") from e
        except ValidationError as e:
            logger.warning(f"Rejected {self.artifact_name}: {e.error_count()} validation errors")
            raise ArtifactError(f"invalid {self.artifact_name}: {e}", {"errors": e.error_count()}) from e


class ModelRepository(JsonRepository[Any]):
    """MGD descriptors and layered models, told apart by their 'kind' field"""

    def __init__(self):
        super().__init__(BaseModel, "model", model_artifact_adapter)


def chain_repository() -> JsonRepository[ChainSetDTO]:
    return JsonRepository(ChainSetDTO, "chains")


def slice_repository() -> JsonRepository[SliceSetDTO]:
    return JsonRepository(SliceSetDTO, "slices")


def payoff_repository() -> JsonRepository[PayoffDTO]:
    return JsonRepository(PayoffDTO, "payoff")
