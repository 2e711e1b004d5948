from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class AppSettings(BaseSettings):
    """
    Process-wide settings loaded from ``DEFECT_*`` environment variables or a ``.env`` file.

    Fields:
        config_path (str | None): Default calibration JSON used when no ``--config`` is given.
        log_level (str): Logging level for the ``defect_analytics`` logger tree.
        log_to_file (bool): Mirror diagnostics into ``log_dir``.
        log_dir (str | None): Directory for the log file.
        threads (int): Default worker count for frame-parallel stages.
        dark_foreground (bool): Defects are darker than the background (bright-field loops).
    """

    model_config = SettingsConfigDict(env_prefix="DEFECT_", env_file=".env", extra="ignore")

    app_name: str = "Defect Video Analytics"

    config_path: Optional[str] = None
    log_level: str = "INFO"
    log_to_file: bool = False
    log_dir: Optional[str] = None
    threads: int = Field(1, ge=1)
    dark_foreground: bool = True


@lru_cache
def get_settings() -> AppSettings:
    """
    Returns a cached instance of AppSettings.

    Returns:
        AppSettings: The configuration object, read once per process.
    """
    return AppSettings()


class RunConfig(BaseModel):
    """
    Everything one CLI subcommand needs: calibration source, inputs, parameters, seed, output dir.
    Referenced paths are validated before any work starts.
    """

    subcommand: str
    calibration_path: Optional[Path] = None
    input_paths: List[Path] = Field(default_factory=list)
    output_dir: Path = Path("output")
    seed: int = 0
    threads: int = Field(1, ge=1)
    parameters: Dict[str, Union[str, int, float, bool, None, List[float]]] = Field(default_factory=dict)

    @field_validator("input_paths")
    @classmethod
    def _inputs_exist(cls, paths: List[Path]) -> List[Path]:
        missing = [str(p) for p in paths if not p.exists()]
        if missing:
            raise ValueError(f"Input path(s) not found: {', '.join(missing)}")
        return paths

    @model_validator(mode="after")
    def _calibration_exists(self) -> "RunConfig":
        if self.calibration_path is not None and not self.calibration_path.is_file():
            raise ValueError(f"Calibration file not found: {self.calibration_path}")
        if self.output_dir.exists() and not self.output_dir.is_dir():
            raise ValueError(f"Output path is not a directory: {self.output_dir}")
        return self
