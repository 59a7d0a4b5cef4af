"""
Analysis configuration management.

Handles the tunable constants of the pipeline (family inflation A, enlarged
domain A', filtration count P1, estimator settings) and their persistent
storage as JSON.

Config files are stored in the app's .config/ directory unless a path is
given explicitly.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from core.errors import ConfigError

logger = logging.getLogger(__name__)

# Used as exact_cutoff when every cube should be summed exactly.
EXACT_ALWAYS = 2**62


def get_app_directory() -> Path:
    """Get the application's root directory."""
    # This file is at src/core/config.py, so go up 3 levels
    return Path(__file__).parent.parent.parent.resolve()


def get_config_directory() -> Path:
    """Get the .config directory inside the app folder."""
    return get_app_directory() / ".config"


@dataclass
class EstimatorConfig:
    """How triple sums are evaluated: exactly up to a size, Monte Carlo above it."""
    exact_cutoff: int = 300
    mc_samples: int = 100_000
    seed: int = 0
    repeats: int = 1

    def __post_init__(self):
        if self.exact_cutoff is None or (
            isinstance(self.exact_cutoff, float) and math.isinf(self.exact_cutoff)
        ):
            self.exact_cutoff = EXACT_ALWAYS
        self.exact_cutoff = int(self.exact_cutoff)
        if self.exact_cutoff < 1:
            raise ConfigError(f"exact_cutoff must be >= 1, got {self.exact_cutoff}")
        if self.mc_samples < 1:
            raise ConfigError(f"mc_samples must be >= 1, got {self.mc_samples}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")

    @classmethod
    def exact(cls, seed: int = 0) -> "EstimatorConfig":
        return cls(exact_cutoff=EXACT_ALWAYS, seed=seed)


@dataclass
class AnalysisConfig:
    """Main pipeline configuration."""
    # Multiresolution family and enlarged-domain constants
    A: float = 4.0
    A_prime: Optional[float] = None  # None means 2·A

    # Filtrations
    P1: int = 3
    k_min: int = 0
    k_max: Optional[int] = None  # None derives the finest scale from the data

    # Randomness and parallelism
    seed: int = 0
    threads: Optional[int] = None

    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)

    def __post_init__(self):
        """Restore nested dataclasses from JSON dicts and check ranges."""
        if isinstance(self.estimator, dict):
            self.estimator = EstimatorConfig(**self.estimator)
        if self.A < 1:
            raise ConfigError(f"A must be >= 1, got {self.A}")
        if self.A_prime is not None and self.A_prime < 0:
            raise ConfigError(f"A_prime must be >= 0, got {self.A_prime}")
        if self.P1 < 1:
            raise ConfigError(f"P1 must be >= 1, got {self.P1}")
        if self.k_max is not None and self.k_max < self.k_min:
            raise ConfigError(f"k_max ({self.k_max}) is below k_min ({self.k_min})")

    @property
    def effective_A_prime(self) -> float:
        return 2.0 * self.A if self.A_prime is None else float(self.A_prime)


class ConfigManager:
    """Manages loading and saving analysis configuration."""

    def __init__(self, config_path: Optional[Path] = None):
        self.config_path = Path(config_path) if config_path else (
            get_config_directory() / "analysis_config.json"
        )
        self._config: Optional[AnalysisConfig] = None

    @property
    def config(self) -> AnalysisConfig:
        """Get current configuration, loading from disk if needed."""
        if self._config is None:
            self._config = self.load()
        return self._config

    def load(self) -> AnalysisConfig:
        """Load configuration from disk, or create default if not exists."""
        if self.config_path.exists():
            try:
                with open(self.config_path, "r") as f:
                    data = json.load(f)
                return AnalysisConfig(**data)
            except (json.JSONDecodeError, TypeError, ConfigError) as e:
                logger.warning("Could not load config %s, using defaults: %s",
                               self.config_path, e)
                return AnalysisConfig()
        return AnalysisConfig()

    def save(self, config: Optional[AnalysisConfig] = None) -> None:
        """Save configuration to disk."""
        if config is not None:
            self._config = config

        if self._config is None:
            return

        self.config_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.config_path, "w") as f:
            json.dump(self._serialize_config(self._config), f, indent=2)
        logger.info("Saved configuration to %s", self.config_path)

    def _serialize_config(self, config: AnalysisConfig) -> dict:
        """Convert config to JSON-serializable dict."""
        data = asdict(config)
        if data["estimator"]["exact_cutoff"] >= EXACT_ALWAYS:
            data["estimator"]["exact_cutoff"] = None
        return data
