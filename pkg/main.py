"""
Main Application Entry Point
Mounts every command router on one argparse CLI and runs the selected route
"""
# Load environment variables from .env file
from dotenv import load_dotenv
load_dotenv()
import argparse
import logging
import sys
from typing import Dict, List, Optional

from pydantic import ValidationError

# Import application components
from app.config import RunConfig, settings
from app.controllers.calibrate_controller import router as calibrate_router
from app.controllers.hier_controller import router as hier_router
from app.controllers.price_controller import router as price_router
from app.controllers.project_controller import router as project_router
from app.controllers.router import Route
from app.controllers.selftest_controller import router as selftest_router
from app.controllers.simulate_controller import router as simulate_router
from app.errors import ExitCode

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)

logger = logging.getLogger(__name__)

# RunConfig field, settings field it overrides, type; the flag is the field in kebab case
KNOBS = (
    ("threads", "threads", int),
    ("seed", "seed", int),
    ("paths", "mc_paths", int),
    ("talbot_nodes", "talbot_nodes", int),
    ("stehfest_terms", "stehfest_terms", int),
    ("density_grid_points", "density_grid_points", int),
    ("quantile_grid_points", "quantile_grid_points", int),
    ("mixing_grid_points", "mixing_grid_points", int),
    ("coupling_grid_points", "coupling_grid_points", int),
    ("euler_steps_per_year", "euler_steps_per_year", int),
    ("ks_tolerance", "ks_tolerance", float),
    ("coupling_tolerance", "coupling_tolerance", float),
)

VERBOSITY_LEVELS = {-2: logging.ERROR, -1: logging.WARNING, 0: logging.INFO, 1: logging.DEBUG, 2: logging.DEBUG}


class MixvolApp:
    """
    Main application class: one parser, one route table.
    Numeric knobs and verbosity flags are accepted after every command.
    """

    def __init__(self):
        self.routes: Dict[str, Route] = {}
        self._setup_parser()
        self._setup_routes()

    def _setup_parser(self):
        """Top-level parser and the options every command shares"""
        self.parser = argparse.ArgumentParser(
            prog="mixvol",
            description="Random volatility models: mixtures of generalized geometric Brownian motions "
                        "calibrated to option-implied densities",
        )
        self.parser.add_argument("--version", action="version", version=f"%(prog)s {settings.version}")

        self.common = argparse.ArgumentParser(add_help=False)
        knobs = self.common.add_argument_group("numeric knobs")
        for dest, field, kind in KNOBS:
            knobs.add_argument("--" + dest.replace("_", "-"), dest=dest, type=kind, default=argparse.SUPPRESS,
                               help=f"(default: {getattr(settings, field)})")
        self.common.add_argument("-v", "--verbose", action="count", default=0, help="More logging")
        self.common.add_argument("-q", "--quiet", action="count", default=0, help="Less logging")

    def _setup_routes(self):
        """Mount every command family"""
        subparsers = self.parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
        for router in (calibrate_router, price_router, simulate_router, project_router, hier_router,
                       selftest_router):
            self.routes.update(router.mount(subparsers, parents=(self.common,)))
        logger.debug(f"Mounted commands: {', '.join(sorted(self.routes))}")

    def parse(self, argv: Optional[List[str]] = None) -> RunConfig:
        """Parsed arguments as a RunConfig; raises SystemExit on usage errors like argparse"""
        namespace = self.parser.parse_args(argv)
        route = self.routes[namespace.route_name]
        knobs = {dest: getattr(namespace, dest) for dest, _, _ in KNOBS if hasattr(namespace, dest)}
        verbosity = max(-2, min(2, namespace.verbose - namespace.quiet))
        return route.to_run_config(namespace.route_name, namespace, knobs, verbosity)

    def run(self, config: RunConfig) -> ExitCode:
        """Run one command; artifacts are written by the route"""
        logging.getLogger().setLevel(VERBOSITY_LEVELS[config.verbosity])
        route = self.routes.get(config.command)
        if route is None:
            logger.error(f"Unknown command '{config.command}'")
            return ExitCode.INPUT
        logger.debug(f"Running {config.command} with inputs {config.inputs} and outputs {config.outputs}")
        return route.invoke(config, config.settings())

    def main(self, argv: Optional[List[str]] = None) -> int:
        try:
            config = self.parse(argv)
        except SystemExit as e:
            return ExitCode.OK if e.code in (0, None) else ExitCode.INPUT
        except ValidationError as e:
            logger.error(f"Invalid arguments: {e}")
            return ExitCode.INPUT
        return int(self.run(config))


# Create application instance
mixvol_app = MixvolApp()


def run(config: RunConfig) -> ExitCode:
    return mixvol_app.run(config)


def main(argv: Optional[List[str]] = None) -> int:
    return mixvol_app.main(argv)


if __name__ == "__main__":
    sys.exit(main())
