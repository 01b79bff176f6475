"""Provenance headers and artifact writing."""

import logging
from pathlib import Path
from typing import Dict, Union

import pandas as pd

from ..core.errors import OutputExists

logger = logging.getLogger(__name__)

HEADER_PREFIX = "# config_hash="


def header_line(config_hash: str) -> str:
    return f"{HEADER_PREFIX}{config_hash}"


def provenance_info(config_hash: str) -> Dict[str, str]:
    """Metadata printed alongside every written artifact."""
    from .. import __version__

    return {
        "config_hash": config_hash,
        "package": "privlinreg",
        "version": __version__,
        "generator": "numpy.random.Philox keyed by sha256(privlinreg:<seed>:<node>:<purpose>)",
    }


def _prepare(path: Union[str, Path], overwrite: bool) -> Path:
    path = Path(path)
    if path.exists() and not overwrite:
        raise OutputExists(f"{path} already exists (pass --overwrite to replace it)")
    if not path.parent.exists():
        logger.warning(f"Creating output directory {path.parent}")
        path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_text(
    body: str, path: Union[str, Path], config_hash: str, overwrite: bool = False
) -> Path:
    """Write ``body`` under the provenance header line."""
    path = _prepare(path, overwrite)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(header_line(config_hash) + "\n")
        handle.write(body)
    logger.debug(f"Wrote {path}")
    return path


def write_frame(
    frame: pd.DataFrame, path: Union[str, Path], config_hash: str, overwrite: bool = False
) -> Path:
    return write_text(frame.to_csv(index=False, lineterminator="\n"), path, config_hash, overwrite)


def read_header(path: Union[str, Path]) -> str:
    """The config hash recorded on the first line of ``path``."""
    with open(path, encoding="utf-8") as handle:
        first = handle.readline().rstrip("\n")
    if not first.startswith(HEADER_PREFIX):
        raise ValueError(f"{path} has no provenance header")
    return first[len(HEADER_PREFIX) :]


def read_frame(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")
