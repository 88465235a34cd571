import argparse
import sys
from dataclasses import dataclass, field
from typing import Any, Awaitable, Callable

Handler = Callable[[argparse.Namespace], Awaitable[int]]


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors carry the program name alone, whatever the subcommand."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog.split()[0]}: error: {message}\n")


@dataclass(frozen=True)
class Argument:
    flags: tuple[str, ...]
    options: dict[str, Any] = field(default_factory=dict)


def arg(*flags: str, **options: Any) -> Argument:
    return Argument(flags, options)


@dataclass(frozen=True)
class Command:
    name: str
    help: str
    handler: Handler
    arguments: tuple[Argument, ...]


class Router:
    def __init__(self):
        self.commands: list[Command] = []

    def command(self, name: str, *arguments: Argument, help: str = ""):
        def decorator(handler: Handler) -> Handler:
            self.commands.append(Command(name, help or (handler.__doc__ or "").strip(), handler, arguments))
            return handler

        return decorator

    def include_routers(self, *routers: "Router"):
        for router in routers:
            self.commands.extend(router.commands)

    def build_parser(self, prog: str) -> argparse.ArgumentParser:
        parser = ArgumentParser(prog=prog)
        parser.add_argument("--log-level", default=None, help="override BATFILL_LOG_LEVEL")
        parser.add_argument("--from-manifest", default=None, metavar="PATH", help="re-run a recorded command")
        sub = parser.add_subparsers(dest="subcommand", metavar="COMMAND")
        for command in sorted(self.commands, key=lambda c: c.name):
            cmd_parser = sub.add_parser(command.name, help=command.help, description=command.help)
            for argument in command.arguments:
                cmd_parser.add_argument(*argument.flags, **argument.options)
            cmd_parser.set_defaults(handler=command.handler)
        return parser
