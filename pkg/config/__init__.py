# This file makes the 'config' directory a Python package.
# Environment settings live in settings.py, per-run settings in run_config.py:
#   from config.settings import current_config
#   from config.run_config import load_run_config
import logging

from .settings import current_config, get_config
from .run_config import RunConfig, build_run_config, load_run_config

logging.getLogger(__name__).debug("config package loaded")
