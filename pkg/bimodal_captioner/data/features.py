"""
Features - Per-modality feature sequences and the BMTF binary file format

Layout (little-endian):
    magic "BMTF" | u8 version=1 | u8 modality | u16 reserved | u32 T | u32 d | f32 cell_seconds
    followed by T·d float32 values, row-major.
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from bimodal_captioner.errors import ContractError, DataError, FormatError

MAGIC = b"BMTF"
VERSION = 1
HEADER = struct.Struct("<4sBBHIIf")

MODALITIES = ("audio", "visual")
MODALITY_CODES = {"audio": 0, "visual": 1}

# Time span of one feature row for the upstream extractors
AUDIO_CELL_SECONDS = 0.96
VISUAL_CELL_SECONDS = 2.56

# cell_seconds is stored as f32; decoded values are rounded back to this many decimals
CELL_DECIMALS = 6


@dataclass
class FeatureSequence:
    """One modality's T×d feature matrix; row i spans [i·cell, (i+1)·cell) seconds."""

    modality: str
    matrix: np.ndarray
    cell_seconds: float

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise DataError(f"unknown modality '{self.modality}'")
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] < 1:
            raise ContractError(f"{self.modality} features must be a non-empty T×d matrix, got {self.matrix.shape}")
        if self.cell_seconds <= 0:
            raise DataError(f"cell_seconds must be positive, got {self.cell_seconds}")

    @property
    def length(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def duration(self) -> float:
        """Seconds of media covered by the sequence."""
        return self.length * self.cell_seconds

    def rows(self, index: np.ndarray) -> "FeatureSequence":
        return FeatureSequence(self.modality, self.matrix[index], self.cell_seconds)


def encode_features(features: FeatureSequence) -> bytes:
    """
    Serialize a feature sequence to BMTF bytes (values stored as float32).

    Args:
        features: Sequence to serialize

    Returns:
        The file contents
    """
    steps, dim = features.matrix.shape
    header = HEADER.pack(MAGIC, VERSION, MODALITY_CODES[features.modality], 0, steps, dim, features.cell_seconds)
    return header + features.matrix.astype("<f4").tobytes(order="C")


def decode_features(payload: bytes, expected_dim: Optional[int] = None) -> FeatureSequence:
    """
    Parse BMTF bytes.

    Args:
        payload: File contents
        expected_dim: Feature width required by the model configuration, if any

    Returns:
        The feature sequence, promoted to float64
    """
    if len(payload) < HEADER.size:
        raise FormatError(f"file shorter than the {HEADER.size}-byte header", offset=len(payload))
    magic, version, code, _, steps, dim, cell_seconds = HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if code not in MODALITY_CODES.values():
        raise FormatError(f"unknown modality code {code}", offset=5)
    if steps == 0 or dim == 0:
        raise FormatError(f"empty shape {steps}×{dim}", offset=8)
    if not np.isfinite(cell_seconds) or cell_seconds <= 0:
        raise FormatError(f"invalid cell_seconds {cell_seconds}", offset=16)
    expected_size = HEADER.size + 4 * steps * dim
    if len(payload) != expected_size:
        raise FormatError(f"payload holds {len(payload) - HEADER.size} bytes, expected {4 * steps * dim}",
                          offset=min(len(payload), expected_size))
    if expected_dim is not None and dim != expected_dim:
        raise FormatError(f"feature width {dim} does not match the configured {expected_dim}", offset=12)
    matrix = np.frombuffer(payload, dtype="<f4", count=steps * dim, offset=HEADER.size).reshape(steps, dim)
    modality = MODALITIES[code]
    return FeatureSequence(modality, matrix.astype(np.float64), round(float(cell_seconds), CELL_DECIMALS))


def load_features(path: Union[str, Path], expected_dim: Optional[int] = None) -> FeatureSequence:
    """
    Read a BMTF feature file.

    Args:
        path: File path
        expected_dim: Feature width required by the model configuration, if any

    Returns:
        The feature sequence
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"feature file '{path}' does not exist")
    try:
        return decode_features(path.read_bytes(), expected_dim)
    except FormatError as e:
        error = FormatError(f"{path}: {e}")
        error.offset = e.offset
        raise error from e


def feature_paths(features_dir: Union[str, Path], video_id: str) -> Tuple[Path, Path]:
    """Locations of the audio and visual files of a video inside a features directory."""
    root = Path(features_dir)
    return root / "audio" / f"{video_id}.bmtf", root / "visual" / f"{video_id}.bmtf"
