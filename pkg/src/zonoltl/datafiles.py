"""Access to packaged fixture files (automata and scenario configs)."""

from importlib import resources


def data_path(name):
    """Filesystem path of a packaged data file."""
    return resources.files("zonoltl").joinpath("data", name)


def data_text(name):
    return data_path(name).read_text(encoding="utf-8")
