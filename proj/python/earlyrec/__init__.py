"""Python bindings for the earlyrec toolkit."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import run as _run


def run_stage(subcommand, config, overrides=()):
    """Run one pipeline stage. `config` is a dict in the CLI config format."""
    return _run(subcommand, _json.dumps(config), list(overrides))
