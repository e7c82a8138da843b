"""
Controller dependencies
Factories for services and repositories, and the artifact I/O every
command shares
"""

import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from ..config import MixvolSettings
from ..dto.model_dto import HierarchicalModelDTO, MgdModelDTO
from ..errors import ArtifactError, PreconditionError
from ..mappers.market_mapper import MarketMapper
from ..mappers.model_mapper import ModelMapper
from ..models.market import RiskNeutralSlice
from ..repositories.json_repository import JsonRepository, ModelRepository, dump_artifact, slice_repository
from ..services.heston_service import HestonService
from ..services.hierarchical_service import HierarchicalService
from ..services.market_service import MarketService
from ..services.mc_service import McService
from ..services.mgp_service import MgpService
from ..services.pricing_service import PricedModel, PricingService
from ..services.projection_service import ProjectionService
from ..services.recovery_service import RecoveryService

logger = logging.getLogger(__name__)


def get_market_service(config: MixvolSettings) -> MarketService:
    return MarketService(config)


def get_recovery_service(config: MixvolSettings) -> RecoveryService:
    market_service = get_market_service(config)
    return RecoveryService(config, market_service, MgpService(config))


def get_hierarchical_service(config: MixvolSettings) -> HierarchicalService:
    market_service = get_market_service(config)
    return HierarchicalService(
        config,
        recovery_service=RecoveryService(config, market_service, MgpService(config)),
        mc_service=McService(config),
        market_service=market_service,
    )


def get_pricing_service(config: MixvolSettings) -> PricingService:
    mc_service = McService(config)
    return PricingService(config, MgpService(config),
                          HierarchicalService(config, mc_service=mc_service), mc_service)


def get_projection_service(config: MixvolSettings) -> ProjectionService:
    return ProjectionService(config)


def get_heston_service(config: MixvolSettings) -> HestonService:
    return HestonService(config)


def get_mc_service(config: MixvolSettings) -> McService:
    return McService(config)


def load_model(path: str) -> PricedModel:
    """MGD descriptor or layered model, whichever the file holds"""
    dto = ModelRepository().load(path)
    if isinstance(dto, MgdModelDTO):
        return ModelMapper.to_descriptor(dto)
    return ModelMapper.to_hierarchical(dto)


def load_descriptor(path: str):
    dto = ModelRepository().load(path)
    if not isinstance(dto, MgdModelDTO):
        raise ArtifactError(f"{path} holds a layered model; this command needs an MGD", {"path": path})
    return ModelMapper.to_descriptor(dto)


def load_hierarchical(path: str):
    dto = ModelRepository().load(path)
    if not isinstance(dto, HierarchicalModelDTO):
        raise ArtifactError(f"{path} holds an MGD; this command needs a layered model", {"path": path})
    return ModelMapper.to_hierarchical(dto)


def load_slice_set(path: str, market_service: MarketService) -> Tuple[List[RiskNeutralSlice], Optional[float], bool]:
    """Slices as stored, or extracted from the chains the file holds; the flag tells which"""
    dto = slice_repository().load(path)
    if dto.slices:
        return [MarketMapper.to_slice(s) for s in dto.slices], dto.spot, False
    chains = [MarketMapper.to_chain(c) for c in dto.chains]
    return [market_service.chain_to_density(chain) for chain in chains], dto.spot, True


def emit(dto: BaseModel, path: Optional[str] = None) -> None:
    """Write an artifact to a file, or to stdout without one"""
    if path is None:
        sys.stdout.write(dump_artifact(dto))
        return
    JsonRepository(type(dto), type(dto).__name__).save(dto, Path(path))


def parse_grid(text: str) -> np.ndarray:
    """'start:stop:step' as an inclusive grid; stop must be a whole number of steps away"""
    try:
        start, stop, step = (float(part) for part in text.split(":"))
    except ValueError as e:
        raise PreconditionError(f"grid {text!r} must read start:stop:step") from e
    if not step > 0 or not stop > start:
        raise PreconditionError(f"grid {text!r} needs start < stop and a positive step")
    count = (stop - start) / step
    if abs(count - round(count)) > 1e-9 * max(1.0, count):
        raise PreconditionError(f"grid {text!r}: stop is not a whole number of steps from start")
    return np.linspace(start, stop, int(round(count)) + 1)


def parse_floats(text: str) -> List[float]:
    """Comma-separated numbers"""
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise PreconditionError(f"{text!r} is not a comma-separated list of numbers") from e
