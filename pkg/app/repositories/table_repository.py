"""
Table Repository - bulk numeric output as CSV
pandas writes shortest round-trip floats and reads them back exactly
"""

import io
import logging

import pandas as pd

from ..errors import ArtifactError
from .base_repository import BaseRepository

logger = logging.getLogger(__name__)


class TableRepository(BaseRepository[pd.DataFrame]):
    """CSV tables with a header row and no index column"""

    def __init__(self, artifact_name: str = "table"):
        super().__init__(artifact_name)

    def serialize(self, entity: pd.DataFrame) -> str:
        return entity.to_csv(index=False, lineterminator="\n")

    def deserialize(self, text: str) -> pd.DataFrame:
        try:
            return pd.read_csv(io.StringIO(text), float_precision="round_trip")
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise ArtifactError(f"{self.artifact_name} is not a readable CSV table: {e}") from e
