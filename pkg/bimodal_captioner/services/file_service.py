"""
File Service - Atomic artifact writes and feature directory discovery
"""

import json
import os
import tempfile
from pathlib import Path
from typing import Any, List, Union

from bimodal_captioner.errors import DataError, FormatError

PathLike = Union[str, Path]


class FileService:
    """Service for handling file operations."""

    # Modality sub-directories of a features directory
    FEATURE_DIRS = ("audio", "visual")
    FEATURE_EXTENSION = ".bmtf"

    def write_bytes_atomic(self, file_path: PathLike, payload: bytes) -> Path:
        """
        Write a file so readers never observe a partial artifact.

        The payload goes to a temporary file in the target directory which
        then replaces the destination.

        Args:
            file_path: Destination
            payload: File contents

        Returns:
            The destination path
        """
        path = Path(file_path)
        self.create_directory(path.parent)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent))
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(payload)
            os.replace(tmp_name, path)
        except OSError as e:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise DataError(f"could not write '{path}': {e}") from e
        return path

    def write_text_atomic(self, file_path: PathLike, content: str) -> Path:
        return self.write_bytes_atomic(file_path, content.encode("utf-8"))

    def write_json_atomic(self, file_path: PathLike, data: Any) -> Path:
        """
        Write JSON with sorted keys and a trailing newline.

        Args:
            file_path: Destination
            data: JSON-serializable value

        Returns:
            The destination path
        """
        return self.write_text_atomic(file_path, json.dumps(data, indent=2, sort_keys=True) + "\n")

    def read_json(self, file_path: PathLike) -> Any:
        """
        Read a JSON file.

        Args:
            file_path: Path to the file

        Returns:
            The decoded value
        """
        path = Path(file_path)
        if not path.is_file():
            raise DataError(f"file '{path}' does not exist")
        try:
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: invalid JSON ({e.msg})", offset=e.pos) from e

    def list_videos(self, features_dir: PathLike) -> List[str]:
        """
        Find the videos that have both an audio and a visual feature file.

        Args:
            features_dir: Directory with ``audio/`` and ``visual/`` sub-directories

        Returns:
            Sorted video ids
        """
        root = Path(features_dir)
        if not root.is_dir():
            raise DataError(f"features directory '{root}' does not exist")
        found = []
        for modality in self.FEATURE_DIRS:
            directory = root / modality
            if not directory.is_dir():
                raise DataError(f"features directory '{root}' has no '{modality}' sub-directory")
            found.append({
                p.stem for p in directory.iterdir()
                if p.suffix == self.FEATURE_EXTENSION and p.is_file() and not p.name.startswith(".")
            })
        return sorted(found[0] & found[1])

    def create_directory(self, directory_path: PathLike) -> bool:
        """
        Create a directory if it doesn't exist.

        Args:
            directory_path: Path to the directory

        Returns:
            True if successful
        """
        try:
            Path(directory_path).mkdir(parents=True, exist_ok=True)
            return True
        except OSError as e:
            raise DataError(f"could not create directory '{directory_path}': {e}") from e
