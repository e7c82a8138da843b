from dataclasses import replace

import numpy as np

from ..dto.model_dto import CouplingDTO, GridMixingDTO, HierarchicalModelDTO, MgdModelDTO, MixingDTO
from ..models.hierarchical import HierarchicalModel, VarianceCoupling
from ..models.market import frozen_array
from ..models.mgp import MgpDescriptor, MixingLaw
from .market_mapper import MarketMapper


class ModelMapper:

    @staticmethod
    def to_mixing_dto(law: MixingLaw) -> MixingDTO:
        if law.is_atomic:
            return MixingDTO(atoms=[(float(t), float(w)) for t, w in zip(law.theta, law.masses)])
        return MixingDTO(grid=GridMixingDTO(
            theta=law.theta.tolist(),
            density=law.density.tolist(),
            masses=law.masses.tolist(),
            cdf_theta=law.cdf_theta.tolist(),
            cdf=law.cdf_values.tolist(),
        ))

    @staticmethod
    def to_mixing(dto: MixingDTO) -> MixingLaw:
        """Convert MixingDTO to a MixingLaw; stored weights are kept bit for bit"""
        if dto.grid is not None:
            grid = dto.grid
            return MixingLaw.from_table(grid.theta, grid.masses, grid.cdf_theta, grid.cdf, grid.density)
        theta = [a[0] for a in dto.atoms]
        weights = [a[1] for a in dto.atoms]
        law = MixingLaw.from_atoms(theta, weights)
        return replace(law, masses=frozen_array(weights, "atom weights"))

    @staticmethod
    def to_mgd_dto(desc: MgpDescriptor) -> MgdModelDTO:
        """Convert an MgpDescriptor to MgdModelDTO"""
        return MgdModelDTO(
            t0=desc.t0,
            x0=desc.x0,
            maturities=desc.maturities.tolist(),
            mixing=ModelMapper.to_mixing_dto(desc.mixing),
            variance=desc.variance_increments.tolist(),
            rates=MarketMapper.to_rate_curve_dto(desc.rates),
            theta_domain=tuple(float(v) for v in desc.theta_domain),
        )

    @staticmethod
    def to_descriptor(dto: MgdModelDTO) -> MgpDescriptor:
        return MgpDescriptor(
            mixing=ModelMapper.to_mixing(dto.mixing),
            maturities=dto.maturities,
            variance_increments=dto.variance,
            x0=dto.x0,
            t0=dto.t0,
            rates=MarketMapper.to_rate_curve(dto.rates),
            theta_domain=dto.theta_domain,
        )

    @staticmethod
    def to_coupling_dto(coupling: VarianceCoupling) -> CouplingDTO:
        rows, cols = np.nonzero(coupling.mass)
        return CouplingDTO(
            rows=rows.tolist(),
            cols=cols.tolist(),
            mass=coupling.mass[rows, cols].tolist(),
            residuals=tuple(float(r) for r in coupling.residuals),
            sweeps=coupling.sweeps,
        )

    @staticmethod
    def to_coupling(dto: CouplingDTO, nodes: np.ndarray) -> VarianceCoupling:
        mass = np.zeros((nodes.size, nodes.size))
        mass[dto.rows, dto.cols] = dto.mass
        return VarianceCoupling(nodes=nodes, mass=mass, residuals=tuple(dto.residuals), sweeps=dto.sweeps)

    @staticmethod
    def to_hierarchical_dto(model: HierarchicalModel) -> HierarchicalModelDTO:
        """Convert a HierarchicalModel to HierarchicalModelDTO"""
        return HierarchicalModelDTO(
            maturities=model.maturities.tolist(),
            x0=model.x0,
            v0=model.v0,
            nodes=model.nodes.tolist(),
            couplings=[ModelMapper.to_coupling_dto(c) for c in model.couplings],
            rates=MarketMapper.to_rate_curve_dto(model.rates),
            spot_slices=[MarketMapper.to_slice_dto(s) for s in model.spot_slices],
            ratio_slices=[MarketMapper.to_slice_dto(s) for s in model.ratio_slices],
        )

    @staticmethod
    def to_hierarchical(dto: HierarchicalModelDTO) -> HierarchicalModel:
        nodes = np.asarray(dto.nodes, dtype=float)
        return HierarchicalModel(
            maturities=dto.maturities,
            x0=dto.x0,
            nodes=nodes,
            couplings=tuple(ModelMapper.to_coupling(c, nodes) for c in dto.couplings),
            v0=dto.v0,
            rates=MarketMapper.to_rate_curve(dto.rates),
            spot_slices=tuple(MarketMapper.to_slice(s) for s in dto.spot_slices),
            ratio_slices=tuple(MarketMapper.to_slice(s) for s in dto.ratio_slices),
        )
