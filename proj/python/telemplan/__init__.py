"""Traffic-aware telemetry probe planning."""

import json

from ._core import *  # noqa: F401,F403
from ._core import __version__, default_config_json, run_pipeline_json


def default_config():
    return json.loads(default_config_json())


def run_pipeline(config):
    """Run the whole pipeline from a config dict; returns the report dict."""
    return json.loads(run_pipeline_json(json.dumps(config)))
