"""
Checkpoint Service - Save and load model parameters with their configuration

A checkpoint is a zip archive holding one ``<path>.npy`` member per parameter
(little-endian float64) and a ``__header__.json`` member with the format
version, the checkpoint kind and the resolved configuration. Member
timestamps are fixed, so identical weights produce identical bytes.
"""

import io
import json
import zipfile
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from bimodal_captioner.errors import DataError, FormatError
from bimodal_captioner.services.file_service import FileService

FORMAT_VERSION = 1
HEADER_MEMBER = "__header__.json"
_FIXED_TIMESTAMP = (1980, 1, 1, 0, 0, 0)


class CheckpointService:
    """Service for reading and writing parameter checkpoints."""

    def __init__(self, file_service: Optional[FileService] = None):
        """
        Initialize the checkpoint service.

        Args:
            file_service: Service used for atomic writes
        """
        self.file_service = file_service or FileService()

    @staticmethod
    def _member(archive: zipfile.ZipFile, name: str, payload: bytes) -> None:
        info = zipfile.ZipInfo(name, date_time=_FIXED_TIMESTAMP)
        info.compress_type = zipfile.ZIP_DEFLATED
        info.external_attr = 0o644 << 16
        archive.writestr(info, payload)

    def save(self, path: Union[str, Path], params: Dict[str, np.ndarray], config: Dict,
             kind: str, extra: Optional[Dict] = None) -> Path:
        """
        Write a checkpoint.

        Args:
            path: Destination file
            params: Parameter arrays keyed by dotted path
            config: Fully resolved configuration
            kind: Checkpoint kind (``captioner`` or ``proposals``)
            extra: Additional header entries (vocabulary, anchors, epoch, ...)

        Returns:
            The destination path
        """
        header = {"format_version": FORMAT_VERSION, "kind": kind, "config": config,
                  "parameters": sorted(params)}
        header.update(extra or {})
        buffer = io.BytesIO()
        with zipfile.ZipFile(buffer, "w") as archive:
            self._member(archive, HEADER_MEMBER, json.dumps(header, sort_keys=True, indent=2).encode("utf-8"))
            for name in sorted(params):
                array_buffer = io.BytesIO()
                np.save(array_buffer, np.ascontiguousarray(params[name], dtype="<f8"), allow_pickle=False)
                self._member(archive, f"{name}.npy", array_buffer.getvalue())
        return self.file_service.write_bytes_atomic(path, buffer.getvalue())

    def load(self, path: Union[str, Path]) -> Tuple["OrderedDict[str, np.ndarray]", Dict]:
        """
        Read a checkpoint.

        Args:
            path: Checkpoint file

        Returns:
            (parameters keyed by dotted path, header)
        """
        path = Path(path)
        if not path.is_file():
            raise DataError(f"checkpoint '{path}' does not exist")
        try:
            with zipfile.ZipFile(path, "r") as archive:
                header = json.loads(archive.read(HEADER_MEMBER).decode("utf-8"))
                if header.get("format_version") != FORMAT_VERSION:
                    raise FormatError(f"{path}: unsupported checkpoint version {header.get('format_version')}")
                params = OrderedDict()
                for name in header.get("parameters", []):
                    with archive.open(f"{name}.npy") as member:
                        params[name] = np.load(io.BytesIO(member.read()), allow_pickle=False).astype(np.float64)
        except (zipfile.BadZipFile, KeyError, ValueError) as e:
            raise FormatError(f"{path}: not a valid checkpoint ({e})") from e
        return params, header
