"""
Core components
===============

Support shared by all modules of this project: the exception base classes,
lookup of nested configuration values by dotted path, and plain-text report
tables.

.. rubric:: Exceptions
.. autosummary::
    ~ConfigError
    ~DimensionError
    ~Y8mException

.. rubric:: Functions
.. autosummary::
    ~miner
    ~set_path
    ~shape_text
    ~table_list
"""

import pyRestTable


class Y8mException(RuntimeError):
    """Base exception for this package."""


class ConfigError(Y8mException, ValueError):
    """Invalid configuration value or combination."""


class DimensionError(Y8mException, ValueError):
    """Array shapes do not agree."""


def shape_text(shape) -> str:
    """Render a shape as ``3x4``."""
    return "x".join(str(n) for n in shape) or "scalar"


def miner(root, path: str, default=None):
    """
    Return a value from a nested dictionary-like structure.

    root : dict-like
        The nested dictionary-like structure.
    path: str
        Text description of the keys to be navigated.  Keys are separated by dots.
    default : object
        Return this value if 'path' is not found.
        Default is 'None.
    """
    obj = root
    num = len(path.split("."))
    for i, part in enumerate(path.split("."), start=1):
        if not hasattr(obj, "get"):
            return default
        fallback = {} if i < num else default
        obj = obj.get(part, fallback)
    return obj


def set_path(root: dict, path: str, value) -> None:
    """Set ``value`` at the dotted ``path`` of a nested dict, creating levels."""
    parts = path.split(".")
    obj = root
    for part in parts[:-1]:
        obj = obj.setdefault(part, {})
        if not isinstance(obj, dict):
            raise ConfigError(f"Cannot descend into non-table value at {path=!r}")
    obj[parts[-1]] = value


def table_list(db, width=40, replace=" ...", labels=None):
    """Render a list of dict (with identical keys) as a table."""

    def truncate(text):
        text = str(text)
        if len(text) > width:
            text = text[: width - len(replace)] + replace
        return text

    table = pyRestTable.Table()
    table.labels = list(labels or sorted(db[0]))
    table.rows = [
        [
            truncate(result[k])
            for k in table.labels
            # columns
        ]
        for result in db  # rows
    ]

    return table


# -----------------------------------------------------------------------------
# :copyright: (c) 2024-2025, y8mkit developers
#
# Distributed under the terms of the license in the LICENSE.txt file,
# distributed with this software.
# -----------------------------------------------------------------------------
