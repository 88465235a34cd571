import importlib
import pkgutil

from src.cli.router import Router


def find_routers(package: str = __name__) -> list[Router]:
    routers = []
    for info in sorted(pkgutil.iter_modules(__path__), key=lambda i: i.name):
        module = importlib.import_module(f"{package}.{info.name}")
        if hasattr(module, "router"):
            routers.append(getattr(module, "router"))
    return routers


found_routers = find_routers()
root_router = Router()
root_router.include_routers(*found_routers)
