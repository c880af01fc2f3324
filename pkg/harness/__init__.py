# This file makes Python treat the `harness` directory as a package.

# Expose the commands, the property suite and the run bookkeeping
from .checks import CheckReport, PropertyResult, run_checks
from .checkpoint import Checkpoint, SweepTask, checkpoint_url
from .manifest import RunManifest, TaskStatus
from .writers import file_digest, read_table, write_csv, write_json, write_table
from .commands import (
    COMMANDS,
    cmd_check,
    cmd_curve,
    cmd_edge,
    cmd_fit,
    cmd_ladder,
    cmd_sweep,
    params_from_config,
)

__version__ = "0.1.0"
