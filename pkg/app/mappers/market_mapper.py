from typing import List

from ..dto.artifact_dto import RateCurveDTO
from ..dto.market_dto import ChainDTO, ChainSetDTO, SliceDTO
from ..models.market import OptionChain, RateCurve, RiskNeutralSlice


class MarketMapper:

    @staticmethod
    def to_rate_curve(dto: RateCurveDTO) -> RateCurve:
        return RateCurve(times=dto.times, rates=dto.rates)

    @staticmethod
    def to_rate_curve_dto(curve: RateCurve) -> RateCurveDTO:
        return RateCurveDTO(times=curve.times.tolist(), rates=curve.rates.tolist())

    @staticmethod
    def to_chain(dto: ChainDTO) -> OptionChain:
        """Convert ChainDTO to an OptionChain entity"""
        return OptionChain(
            maturity=dto.maturity,
            strikes=dto.strikes,
            call_prices=dto.calls,
            forward=dto.forward,
            discount=dto.discount,
            start=dto.start,
        )

    @staticmethod
    def to_chain_dto(chain: OptionChain) -> ChainDTO:
        return ChainDTO(
            maturity=chain.maturity,
            forward=chain.forward,
            discount=chain.discount,
            strikes=chain.strikes.tolist(),
            calls=chain.call_prices.tolist(),
            start=chain.start,
        )

    @staticmethod
    def to_chain_set_dto(chains: List[OptionChain], spot: float = None) -> ChainSetDTO:
        return ChainSetDTO(spot=spot, chains=[MarketMapper.to_chain_dto(chain) for chain in chains])

    @staticmethod
    def to_slice(dto: SliceDTO) -> RiskNeutralSlice:
        """Convert SliceDTO to a RiskNeutralSlice; the stored CDF is kept as is"""
        return RiskNeutralSlice(
            maturity=dto.maturity,
            forward=dto.forward,
            grid=dto.x,
            density=dto.pdf,
            cdf=dto.cdf,
            repaired_strikes=tuple(dto.repaired_strikes),
        )

    @staticmethod
    def to_slice_dto(rn_slice: RiskNeutralSlice) -> SliceDTO:
        return SliceDTO(
            maturity=rn_slice.maturity,
            forward=rn_slice.forward,
            x=rn_slice.grid.tolist(),
            pdf=rn_slice.density.tolist(),
            cdf=rn_slice.cdf.tolist(),
            repaired_strikes=list(rn_slice.repaired_strikes),
        )
