"""
Price Controller - CLI Layer for pricing
Prices a payoff file on a model file
"""

import logging

from ..config import MixvolSettings, RunConfig
from ..errors import ExitCode
from ..mappers.report_mapper import ReportMapper
from ..repositories.json_repository import payoff_repository
from .dependencies import emit, get_pricing_service, load_model
from .router import INPUT, OUTPUT, CommandRouter, argument

logger = logging.getLogger(__name__)

router = CommandRouter()


@router.command(
    "price",
    summary="Price a payoff on a model",
    description="Closed-form mixing-weighted Black prices where the model admits them, Monte Carlo otherwise",
    arguments=(
        argument("--model", role=INPUT, required=True, help="MGD or layered model JSON"),
        argument("--payoff", role=INPUT, required=True, help="Payoff JSON"),
        argument("--out", role=OUTPUT, help="Price report JSON (default: stdout)"),
        argument("--mc", action="store_true", help="Price by Monte Carlo even when a closed form exists"),
        argument("--antithetic", action="store_true", help="Antithetic pairs in Monte Carlo"),
    ),
)
def price(run: RunConfig, config: MixvolSettings) -> ExitCode:
    """Price one payoff"""
    pricing_service = get_pricing_service(config)
    model = load_model(run.inputs["model"])
    payoff_dto = payoff_repository().load(run.inputs["payoff"])

    quote = pricing_service.price(model, ReportMapper.to_payoff(payoff_dto), monte_carlo=bool(run.options.get("mc")),
                                  antithetic=bool(run.options.get("antithetic")))
    emit(ReportMapper.to_price_report_dto(quote, payoff_dto), run.outputs.get("out"))
    return ExitCode.OK
