"""
Frame <-> dpa <-> time and pixel <-> nm conversions.

All physical constants live in :class:`Calibration`; nothing downstream
hard-codes a number that belongs here.
"""
import hashlib
import json
from pathlib import Path
from typing import Union

from pydantic import BaseModel, ConfigDict, Field

from utils.exceptions import DomainError

DEFAULT_SAMPLE_VOLUME_NM3 = 416.6 * 264 * 75
NM3_TO_CM3 = 1e-21


class Calibration(BaseModel):
    """
    Conversion constants for one imaging session.

    Fields:
        pixels_per_nm (float): Spatial calibration of the frames.
        image_width_px, image_height_px (int): Frame size.
        dpa_intercept (float): Dose at frame 0.
        dpa_per_frame (float): Dose increment per frame.
        dose_rate_dpa_per_s (float): Dose rate used to turn dpa into seconds.
        sample_volume_nm3 (float): Imaged volume used for number densities.
        visibility_factor (float): Correction from visible loops to all loops.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    pixels_per_nm: float = Field(2.6884, gt=0)
    image_width_px: int = Field(1344, gt=0)
    image_height_px: int = Field(962, gt=0)
    dpa_intercept: float = 0.8534
    dpa_per_frame: float = Field(0.00140, gt=0)
    dose_rate_dpa_per_s: float = Field(8e-4, gt=0)
    sample_volume_nm3: float = Field(DEFAULT_SAMPLE_VOLUME_NM3, gt=0)
    visibility_factor: float = Field(7 / 4, ge=1)

    @property
    def seconds_per_frame(self) -> float:
        return self.dpa_per_frame / self.dose_rate_dpa_per_s

    @property
    def sample_volume_cm3(self) -> float:
        return self.sample_volume_nm3 * NM3_TO_CM3

    @classmethod
    def exact_dose_schedule(cls, **overrides) -> "Calibration":
        """
        Calibration whose dose slope is the unrounded 1.6466 dpa over 1175 frames,
        so frame 1175 lands on 2.5 dpa exactly.
        """
        return cls(**{"dpa_per_frame": 1.6466 / 1175, **overrides})

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "Calibration":
        """
        Loads a calibration record; absent fields keep their defaults.

        Args:
            path (str | Path): JSON file whose keys are Calibration field names.

        Returns:
            Calibration: Validated calibration.
        """
        with open(path, "r", encoding="utf-8") as f:
            return cls.model_validate(json.load(f))

    def to_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.model_dump(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def matches_frame(self, width_px: int, height_px: int) -> bool:
        """True when a frame has the resolution ``pixels_per_nm`` was measured at."""
        return (width_px, height_px) == (self.image_width_px, self.image_height_px)

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def frame_to_dpa(frame: int, cal: Calibration) -> float:
    if frame < 0:
        raise DomainError(f"Frame index must be non-negative, got {frame}")
    return cal.dpa_intercept + frame * cal.dpa_per_frame


def dpa_to_frame(dpa: float, cal: Calibration) -> int:
    """Nearest frame index for a dose; inverse of :func:`frame_to_dpa`."""
    frame = round((dpa - cal.dpa_intercept) / cal.dpa_per_frame)
    if frame < 0:
        raise DomainError(f"Dose {dpa} lies before frame 0 (intercept {cal.dpa_intercept})")
    return int(frame)


def dpa_to_time_s(dpa: float, cal: Calibration) -> float:
    if dpa < 0:
        raise DomainError(f"Dose must be non-negative, got {dpa}")
    return dpa / cal.dose_rate_dpa_per_s


def frame_to_time_s(frame: int, cal: Calibration) -> float:
    return dpa_to_time_s(frame_to_dpa(frame, cal), cal)


def px_to_nm(length_px: float, cal: Calibration) -> float:
    if length_px < 0:
        raise DomainError(f"Length must be non-negative, got {length_px} px")
    return length_px / cal.pixels_per_nm


def nm_to_px(length_nm: float, cal: Calibration) -> float:
    if length_nm < 0:
        raise DomainError(f"Length must be non-negative, got {length_nm} nm")
    return length_nm * cal.pixels_per_nm
