# csmil/core/routing.py
import argparse
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

Handler = Callable[[argparse.Namespace], int]


@dataclass
class Route:
    name: str
    handler: Handler
    help: str
    arguments: List[Tuple[Tuple[str, ...], dict]] = field(default_factory=list)


class CommandRouter:
    """Collects subcommands the way APIRouter collects endpoints"""

    def __init__(self, tags: Optional[List[str]] = None):
        self.tags = tags or []
        self.routes: Dict[str, Route] = {}

    def command(self, name: str, help: str = "", arguments: Optional[List[Tuple[Tuple[str, ...], dict]]] = None):
        def decorator(handler: Handler) -> Handler:
            if name in self.routes:
                raise ValueError(f"command {name!r} registered twice")
            self.routes[name] = Route(name=name, handler=handler, help=help, arguments=list(arguments or []))
            return handler

        return decorator

    def include_router(self, other: "CommandRouter") -> None:
        for name, route in other.routes.items():
            if name in self.routes:
                raise ValueError(f"command {name!r} registered twice")
            self.routes[name] = route


def arg(*flags: str, **kwargs) -> Tuple[Tuple[str, ...], dict]:
    return flags, kwargs
