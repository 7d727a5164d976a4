"""
Configuration management for the bi-modal captioner
"""

import copy
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from bimodal_captioner.data.features import AUDIO_CELL_SECONDS, VISUAL_CELL_SECONDS
from bimodal_captioner.data.synthetic import SynthSpec
from bimodal_captioner.errors import ConfigurationError, DataError, FormatError
from bimodal_captioner.model.decoder import DecoderConfig
from bimodal_captioner.model.encoder import EncoderConfig
from bimodal_captioner.services.file_service import FileService
from bimodal_captioner.training.trainer import TrainConfig
from bimodal_captioner.utils.logger import get_logger

logger = get_logger(__name__)


class Config:
    """Configuration manager for the bi-modal captioner."""

    # Default configuration values (full-scale hyperparameters)
    DEFAULT_CONFIG = {
        "model": {
            "modality": "bimodal",
            "d_a": 128,
            "d_v": 1024,
            "d_c": 300,
            "layers": 2,
            "heads": 4,
            "d_in": 1024,
            "dropout": 0.1,
            "final_norm": True,
            "max_caption_len": 30,
            "vocab_min_count": 1,
            "embeddings_path": None,
            "freeze_embeddings": False,
        },
        "proposals": {
            "audio_anchor_count": 48,
            "visual_anchor_count": 128,
            "audio_heads": 10,
            "visual_heads": 10,
            "hidden": 512,
            "dropout": 0.1,
            "top_k": 100,
            "anchor_seed": 0,
            "strict_balance": False,
        },
        "training": {
            "procedure": "cap_then_prop",
            "label_smoothing": 0.7,
            "learning_rate": 5e-5,
            "caption_batch_size": 32,
            "proposal_batch_size": 16,
            "loc_coeff": 1.0,
            "obj_coeff": 1.0,
            "noobj_coeff": 100.0,
            "caption_max_epochs": 100,
            "proposal_max_epochs": 70,
            "patience": 30,
            "max_steps": None,
            "seed": 0,
            "workers": 0,
        },
        "data": {
            "features_dir": None,
            "train_annotations": None,
            "val_annotations": None,
            "vocab_path": None,
            "output_dir": "runs",
            "audio_pad": 800,
            "visual_pad": 300,
            "audio_cell_seconds": AUDIO_CELL_SECONDS,
            "visual_cell_seconds": VISUAL_CELL_SECONDS,
        },
        "evaluation": {
            "thresholds": [0.3, 0.5, 0.7, 0.9],
            "best_prefix": False,
            "bleu_orders": [3, 4],
        },
        "synthetic": SynthSpec().to_dict(),
    }

    # Keys holding file paths; relative values are resolved against the config file
    PATH_KEYS = ("data.features_dir", "data.train_annotations", "data.val_annotations", "data.vocab_path",
                 "data.output_dir", "model.embeddings_path")

    def __init__(self, config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None):
        """
        Initialize the configuration manager.

        Args:
            config_path: Path to a JSON configuration file (default: built-in defaults only)
            overrides: Dotted keys applied after loading
        """
        self.config_path = Path(config_path) if config_path is not None else None
        self.config = self._load_config()
        for key, value in (overrides or {}).items():
            self.set(key, value)

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "Config":
        """Rebuild a configuration from a resolved dictionary, e.g. a checkpoint header."""
        config = cls()
        config.config = cls._merge(cls.DEFAULT_CONFIG, raw)
        return config

    @staticmethod
    def _merge(defaults: Dict[str, Any], loaded: Dict[str, Any]) -> Dict[str, Any]:
        merged = copy.deepcopy(defaults)
        for section, values in loaded.items():
            if section not in defaults:
                raise ConfigurationError(f"unknown configuration section '{section}'")
            if not isinstance(values, dict):
                raise ConfigurationError(f"configuration section '{section}' must be an object")
            unknown = sorted(set(values) - set(defaults[section]))
            if unknown:
                raise ConfigurationError(f"unknown keys in section '{section}': {unknown}")
            merged[section].update(copy.deepcopy(values))
        return merged

    def _load_config(self) -> Dict[str, Any]:
        """
        Load configuration from file, filling missing keys from the defaults.

        Returns:
            Configuration dictionary
        """
        if self.config_path is None:
            return copy.deepcopy(self.DEFAULT_CONFIG)
        if not self.config_path.is_file():
            raise DataError(f"configuration file '{self.config_path}' does not exist")
        try:
            with open(self.config_path, "r", encoding="utf-8") as f:
                loaded = json.load(f)
        except json.JSONDecodeError as e:
            raise FormatError(f"{self.config_path}: invalid JSON ({e.msg})", offset=e.pos) from e
        if not isinstance(loaded, dict):
            raise FormatError(f"{self.config_path}: configuration must be a JSON object")
        merged = self._merge(self.DEFAULT_CONFIG, loaded)
        base = self.config_path.parent
        for key in self.PATH_KEYS:
            section, name = key.split(".")
            value = merged[section][name]
            if value is not None and not Path(value).is_absolute():
                merged[section][name] = str(base / value)
        return merged

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get a configuration value.

        Args:
            key: Dotted key such as ``training.seed``
            default: Default value if key not found

        Returns:
            Configuration value
        """
        node: Any = self.config
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def set(self, key: str, value: Any) -> None:
        """
        Set a configuration value.

        Args:
            key: Dotted key of an existing setting
            value: Configuration value
        """
        section, _, name = key.partition(".")
        if section not in self.config or name not in self.config[section]:
            raise ConfigurationError(f"unknown configuration key '{key}'")
        self.config[section][name] = value

    def to_json(self) -> Dict[str, Any]:
        return copy.deepcopy(self.config)

    def save(self, path: Optional[str] = None) -> bool:
        """
        Save configuration to file.

        Args:
            path: Destination (default: the file the configuration was loaded from)

        Returns:
            True if successful
        """
        target = Path(path) if path is not None else self.config_path
        if target is None:
            raise ConfigurationError("no path to save the configuration to")
        FileService().write_json_atomic(target, self.config)
        return True

    def echo(self, artifact_path) -> Path:
        """Write the resolved configuration next to an output artifact as ``<artifact>.config.json``."""
        artifact_path = Path(artifact_path)
        target = artifact_path.with_name(artifact_path.name + ".config.json")
        FileService().write_json_atomic(target, self.config)
        return target

    def reset(self) -> None:
        """Reset configuration to defaults."""
        self.config = copy.deepcopy(self.DEFAULT_CONFIG)

    def balance_products(self) -> Tuple[int, int]:
        """T_a·|Ψ_a| and T_v·|Ψ_v| from the pad lengths and anchor counts."""
        return (self.get("data.audio_pad") * self.get("proposals.audio_anchor_count"),
                self.get("data.visual_pad") * self.get("proposals.visual_anchor_count"))

    def _problems(self) -> Tuple[List[str], Optional[str]]:
        problems = []
        model = self.config["model"]
        if model["heads"] < 1 or model["d_in"] % model["heads"] != 0:
            problems.append(f"model.d_in={model['d_in']} is not divisible by model.heads={model['heads']}")
        for name in ("d_a", "d_v", "d_c"):
            if model[name] < 2 or model[name] % 2 != 0:
                problems.append(f"model.{name}={model[name]} must be a positive even width")
        training = self.config["training"]
        if not 0.0 <= training["label_smoothing"] < 1.0:
            problems.append(f"training.label_smoothing={training['label_smoothing']} must lie in [0, 1)")
        for name in ("loc_coeff", "obj_coeff", "noobj_coeff"):
            if training[name] < 0:
                problems.append(f"training.{name}={training[name]} must be non-negative")
        for name in ("audio_heads", "visual_heads", "audio_anchor_count", "visual_anchor_count", "top_k"):
            if self.config["proposals"][name] < 1:
                problems.append(f"proposals.{name} must be positive")
        orders = self.config["evaluation"]["bleu_orders"]
        if not orders or any(not isinstance(n, int) or n < 1 for n in orders):
            problems.append(f"evaluation.bleu_orders={orders} must be a non-empty list of positive n-gram orders")

        imbalance = None
        if model["modality"] == "bimodal":
            audio, visual = self.balance_products()
            if audio != visual:
                imbalance = f"modality balance T_a*|anchors_a|={audio} differs from T_v*|anchors_v|={visual}"
        return problems, imbalance

    def verify(self) -> Tuple[bool, str]:
        """
        Verify the configuration.

        Returns:
            Tuple of (ok, message)
        """
        problems, imbalance = self._problems()
        if imbalance:
            problems.append(imbalance)
        if problems:
            return False, "; ".join(problems)
        audio, visual = self.balance_products()
        return True, f"configuration is valid (balance {audio} == {visual})"

    def check(self) -> None:
        """Raise on invalid settings; an unbalanced pool only warns unless ``proposals.strict_balance`` is set."""
        problems, imbalance = self._problems()
        if imbalance and self.get("proposals.strict_balance"):
            problems.append(imbalance)
        elif imbalance:
            logger.warning("%s", imbalance)
        if problems:
            raise ConfigurationError("; ".join(problems))

    def encoder_config(self) -> EncoderConfig:
        model = self.config["model"]
        return EncoderConfig(model["layers"], model["d_a"], model["d_v"], model["heads"], model["d_in"],
                             model["dropout"], model["modality"], model["final_norm"])

    def decoder_config(self, vocab_size: int) -> DecoderConfig:
        model = self.config["model"]
        return DecoderConfig(model["layers"], model["d_c"], model["heads"], model["d_in"], vocab_size,
                             model["d_a"], model["d_v"], model["dropout"], model["modality"])

    def train_config(self, **changes) -> TrainConfig:
        values = dict(self.config["training"])
        values.pop("workers")
        values.update(
            top_k=self.get("proposals.top_k"),
            thresholds=tuple(self.get("evaluation.thresholds")),
            best_prefix=self.get("evaluation.best_prefix"),
        )
        values.update(changes)
        return TrainConfig(**values)

    def synth_spec(self) -> SynthSpec:
        return SynthSpec.from_dict(self.config["synthetic"])

    def pad_lengths(self) -> Dict[str, int]:
        return {"audio": self.get("data.audio_pad"), "visual": self.get("data.visual_pad")}

    def cell_seconds(self, modality: str) -> float:
        return self.get(f"data.{modality}_cell_seconds")
