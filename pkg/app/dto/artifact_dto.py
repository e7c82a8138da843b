"""
Artifact DTOs - Data Transfer Objects
Common base of every JSON artifact the CLI reads or writes
"""

from typing import List

from pydantic import BaseModel, ConfigDict, Field, field_validator

SCHEMA_VERSION = "mixvol/1"


class ArtifactDTO(BaseModel):
    """Top-level artifact carrying the schema tag"""
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    schema_version: str = Field(SCHEMA_VERSION, alias="schema", description="Artifact schema version")

    @field_validator("schema_version")
    @classmethod
    def known_schema(cls, value: str) -> str:
        if value != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema {value!r}, expected {SCHEMA_VERSION!r}")
        return value


class RateCurveDTO(BaseModel):
    """Piecewise-constant rates; rates[i] applies from times[i]"""
    model_config = ConfigDict(extra="forbid")

    times: List[float] = Field(default_factory=lambda: [0.0], min_length=1)
    rates: List[float] = Field(default_factory=lambda: [0.0], min_length=1)
