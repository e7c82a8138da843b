"""
Command Router - CLI Layer plumbing
Controllers register handlers with decorators; the application mounts each
router as an argparse sub-command family
"""

import argparse
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from ..config import MixvolSettings, RunConfig
from ..errors import ExitCode, MixvolError, exit_code_for

logger = logging.getLogger(__name__)

Handler = Callable[[RunConfig, MixvolSettings], ExitCode]

INPUT = "input"
OUTPUT = "output"
OPTION = "option"
KNOB = "knob"


@dataclass(frozen=True)
class Argument:
    """One command-line argument and the RunConfig slot it fills"""

    flags: Tuple[str, ...]
    role: str = OPTION
    kwargs: Dict[str, Any] = field(default_factory=dict)

    @property
    def dest(self) -> str:
        return self.kwargs.get("dest") or self.flags[-1].lstrip("-").replace("-", "_")


def argument(*flags: str, role: str = OPTION, **kwargs) -> Argument:
    return Argument(flags=tuple(flags), role=role, kwargs=kwargs)


@dataclass(frozen=True)
class Route:
    name: str
    summary: str
    description: str
    arguments: Tuple[Argument, ...]
    handler: Handler

    def invoke(self, run: RunConfig, config: MixvolSettings) -> ExitCode:
        """Run the handler; errors become exit codes the way HTTP handlers turn them into status codes"""
        try:
            return ExitCode(self.handler(run, config))
        except MixvolError as e:
            code = exit_code_for(e)
            logger.error(f"{run.command} failed ({code.name.lower()}): {e}")
            if e.context:
                logger.info(f"Error context: {e.context}")
            return code
        except Exception as e:
            logger.exception(f"Internal error in {run.command}: {e}")
            return ExitCode.INTERNAL

    def to_run_config(self, command: str, namespace: argparse.Namespace, knobs: Dict[str, Any],
                      verbosity: int) -> RunConfig:
        slots: Dict[str, Dict[str, Any]] = {INPUT: {}, OUTPUT: {}, OPTION: {}}
        for arg in self.arguments:
            value = getattr(namespace, arg.dest, None)
            if arg.role == KNOB:
                if value is not None:
                    knobs[arg.dest] = value
            elif arg.role in (INPUT, OUTPUT):
                if value is not None:
                    slots[arg.role][arg.dest] = str(value)
            else:
                slots[OPTION][arg.dest] = value
        return RunConfig(command=command, inputs=slots[INPUT], outputs=slots[OUTPUT], options=slots[OPTION],
                         verbosity=verbosity, **knobs)


class CommandRouter:
    """Decorator-based registry of the commands of one family"""

    def __init__(self, prefix: Optional[str] = None, help: str = ""):
        self.prefix = prefix
        self.help = help
        self.routes: List[Route] = []

    def command(self, name: str, summary: str = "", description: str = "",
                arguments: Tuple[Argument, ...] = ()):
        def decorator(handler: Handler) -> Handler:
            self.routes.append(Route(name=name, summary=summary, description=description or summary,
                                     arguments=tuple(arguments), handler=handler))
            return handler
        return decorator

    def qualified(self, route: Route) -> str:
        return f"{self.prefix} {route.name}" if self.prefix else route.name

    def mount(self, subparsers, parents=()) -> Dict[str, Route]:
        """Add this family's parsers; returns the routes by qualified command name"""
        mounted = {}
        if self.prefix:
            family = subparsers.add_parser(self.prefix, help=self.help, description=self.help)
            target = family.add_subparsers(dest="subcommand", required=True, metavar="COMMAND")
        else:
            target = subparsers
        for route in self.routes:
            parser = target.add_parser(route.name, help=route.summary, description=route.description,
                                       parents=list(parents),
                                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
            for arg in route.arguments:
                parser.add_argument(*arg.flags, **arg.kwargs)
            parser.set_defaults(route_name=self.qualified(route))
            mounted[self.qualified(route)] = route
        return mounted
