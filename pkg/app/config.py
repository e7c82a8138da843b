"""
Application Configuration
Numeric knobs for every module, overridable through MIXVOL_* environment
variables or a .env file
"""

from enum import Enum
from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class InversionMethod(str, Enum):
    TALBOT = "talbot"
    STEHFEST = "stehfest"


class MixvolSettings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="MIXVOL_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # App Configuration
    app_name: str = "mixvol"
    version: str = "1.0.0"
    schema_version: str = "mixvol/1"
    log_level: str = "INFO"

    # Market model
    density_grid_points: int = Field(512, ge=64, le=16384, description="Points of log-spaced density grids")
    density_grid_stdevs: float = Field(6.0, gt=2.0, le=20.0,
                                       description="Half-width of density grids in total-variance stdevs")
    min_chain_strikes: int = Field(5, ge=3, description="Minimum strikes per option chain")
    chain_repair_tolerance: float = Field(1e-2, gt=0.0,
                                          description="Largest convex-regression repair, relative to forward")
    mass_tolerance: float = Field(1e-6, gt=0.0)
    martingale_tolerance: float = Field(1e-3, gt=0.0)

    # MGP core
    quantile_grid_points: int = Field(256, ge=16, le=65536)
    equivalence_tolerance: float = Field(1e-8, gt=0.0)

    # Mixing recovery
    inversion_method: InversionMethod = InversionMethod.TALBOT
    talbot_nodes: int = Field(32, ge=8, le=128, description="Fixed-Talbot contour nodes")
    stehfest_terms: int = Field(14, ge=4, le=30, description="Largest Gaver-Stehfest term count (even)")
    monotone_max_order: int = Field(6, ge=0, le=6)
    monotone_tolerance: float = Field(1e-7, gt=0.0)
    truncation_tolerance: float = Field(1e-6, gt=0.0)
    residue_tolerance: float = Field(1e-6, gt=0.0)
    chain_residue_tolerance: float = Field(1e-2, gt=0.0,
                                           description="Residue tolerance for transforms of chain-derived slices")
    accepted_clipped_mass: float = Field(0.05, gt=0.0, lt=1.0)
    max_clipped_mass: float = Field(0.25, gt=0.0, lt=1.0)
    recovery_tolerance: float = Field(1e-3, gt=0.0, description="Largest CDF error of a continuous recovery")
    calibration_l1_tolerance: float = Field(1e-2, gt=0.0, description="Largest L1 gap to the input densities")
    calendar_repair_tolerance: float = Field(0.05, gt=0.0)
    mixing_grid_points: int = Field(512, ge=32, le=16384)
    mixing_grid_span: float = Field(8.0, gt=1.0,
                                     description="Mixing grid upper end in multiples of the slice log-variance")
    transform_grid_points: int = Field(64, ge=8)

    # Projection
    euler_steps_per_year: int = Field(200, ge=10)
    projection_mask_density: float = Field(1e-12, ge=0.0)
    max_escape_fraction: float = Field(5e-3, ge=0.0, lt=1.0)

    # Hierarchical
    coupling_grid_points: int = Field(128, ge=8, le=1024)
    coupling_tolerance: float = Field(1e-6, gt=0.0)
    coupling_max_sweeps: int = Field(10_000, ge=1)
    coupling_infeasible_residual: float = Field(1e-3, gt=0.0)
    coupling_moment_tolerance: float = Field(1e-2, gt=0.0)
    chaining_tolerance: float = Field(2e-4, gt=0.0,
                                      description="Largest L1 gap between chained and recovered layer marginals")
    mean_projection_tolerance: float = Field(5e-2, ge=0.0,
                                             description="Largest relative mean gap the increment tilt absorbs")
    cir_steps_per_year: int = Field(500, ge=10)
    cir_truncation_warning: float = Field(0.05, ge=0.0, le=1.0)
    heston_draws: int = Field(100_000, ge=100)
    ks_tolerance: float = Field(1e-2, gt=0.0, lt=1.0)
    oracle_ks_tolerance: float = Field(1.5e-2, gt=0.0, lt=1.0, description="Two-sample KS bound against oracle draws")

    # Monte Carlo
    mc_paths: int = Field(100_000, ge=1)
    mc_batch_size: int = Field(8192, ge=1)
    threads: int = Field(1, ge=1, le=256)
    seed: int = Field(7, ge=0)


class RunConfig(BaseModel):
    """
    One CLI invocation: the command, its files, the numeric knobs given on
    the command line and the verbosity. Unset knobs keep the settings value.
    """
    model_config = ConfigDict(extra="forbid")

    command: str = Field(..., min_length=1)
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    options: Dict[str, Any] = Field(default_factory=dict)
    verbosity: int = Field(0, ge=-2, le=2)

    threads: Optional[int] = Field(None, ge=1, le=256)
    seed: Optional[int] = Field(None, ge=0)
    paths: Optional[int] = Field(None, ge=1)
    talbot_nodes: Optional[int] = Field(None, ge=8, le=128)
    stehfest_terms: Optional[int] = Field(None, ge=4, le=30)
    density_grid_points: Optional[int] = Field(None, ge=64, le=16384)
    quantile_grid_points: Optional[int] = Field(None, ge=16, le=65536)
    mixing_grid_points: Optional[int] = Field(None, ge=32, le=16384)
    coupling_grid_points: Optional[int] = Field(None, ge=8, le=1024)
    euler_steps_per_year: Optional[int] = Field(None, ge=10)
    ks_tolerance: Optional[float] = Field(None, gt=0.0, lt=1.0)
    coupling_tolerance: Optional[float] = Field(None, gt=0.0)

    def settings(self, base: Optional[MixvolSettings] = None) -> MixvolSettings:
        """Settings with this run's knobs layered on top"""
        base = base or settings
        knobs = self.model_dump(exclude={"command", "inputs", "outputs", "options", "verbosity"},
                                exclude_none=True)
        if "paths" in knobs:
            knobs["mc_paths"] = knobs.pop("paths")
        return base.model_copy(update=knobs)


# Create a singleton instance
settings = MixvolSettings()
