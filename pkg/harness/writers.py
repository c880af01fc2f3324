"""Output files of a run.

Every file is written next to its final path and moved into place with
os.replace, so a killed run never leaves a truncated CSV or JSON behind.
"""
import hashlib
import json
import logging
import math
import os
from typing import Any, Callable, Dict, Iterable, List

import numpy as np
import pandas as pd

from config.settings import current_config

logger = logging.getLogger(__name__)

DIGEST_CHUNK = 1 << 20


def _clean(value: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def _atomic_write(path: str, write: Callable[[str], None]) -> str:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = f"{path}.tmp"
    try:
        write(tmp_path)
        os.replace(tmp_path, path)
    except Exception:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logger.debug(f"Wrote {path}")
    return path


def write_csv(frame: pd.DataFrame, path: str) -> str:
    """CSV with every float printed as %.17g, so values round-trip exactly."""
    return _atomic_write(path, lambda tmp: frame.to_csv(tmp, index=False, float_format=current_config.CSV_FLOAT_FORMAT,
                                                        encoding=current_config.CSV_ENCODING, lineterminator="\n"))


def write_xlsx(frame: pd.DataFrame, path: str, sheet_name: str = "data") -> str:
    def write(tmp):
        with pd.ExcelWriter(tmp, engine="openpyxl") as writer:
            frame.to_excel(writer, sheet_name=sheet_name, index=False)
    return _atomic_write(path, write)


def to_json_text(payload: Any) -> str:
    return json.dumps(_clean(payload), sort_keys=True, indent=2) + "\n"


def write_json(payload: Any, path: str) -> str:
    text = to_json_text(payload)

    def write(tmp):
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    return _atomic_write(path, write)


def write_table(frame: pd.DataFrame, directory: str, stem: str, formats: Iterable[str]) -> List[str]:
    """The table as <stem>.csv (always) and <stem>.xlsx when requested."""
    paths = [write_csv(frame, os.path.join(directory, f"{stem}.csv"))]
    if "xlsx" in formats:
        paths.append(write_xlsx(frame, os.path.join(directory, f"{stem}.xlsx"), sheet_name=stem))
    return paths


def file_digest(path: str) -> str:
    """sha256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(DIGEST_CHUNK), b""):
            digest.update(chunk)
    return digest.hexdigest()


def read_table(path: str) -> pd.DataFrame:
    return pd.read_csv(path, encoding=current_config.CSV_ENCODING, float_precision="round_trip")


def digests(paths: Iterable[str]) -> Dict[str, str]:
    return {os.path.basename(p): file_digest(p) for p in paths}
