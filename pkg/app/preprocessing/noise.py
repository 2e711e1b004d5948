"""
Synthetic noise for robustness experiments: Gaussian, salt-and-pepper and Poisson.

Images are processed in normalised [0, 1] float space and converted back to
the input dtype. Zero-magnitude models return an exact copy.
"""
import math
import shutil
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np
from skimage.util import img_as_float, img_as_ubyte, random_noise

from preprocessing.frames import FrameSequence, write_frame
from utils.logger import SingletonLogger, log_exceptions


@dataclass(frozen=True)
class GaussianNoise:
    variance: float  # in normalised intensity units

    def __post_init__(self):
        if not (self.variance >= 0 and math.isfinite(self.variance)):
            raise ValueError(f"Gaussian variance must be a finite value >= 0, got {self.variance}")

    @property
    def is_identity(self) -> bool:
        return self.variance == 0


@dataclass(frozen=True)
class SaltPepperNoise:
    amount: float
    ratio: float = 0.5  # salt fraction among corrupted pixels

    def __post_init__(self):
        if not 0.0 <= self.amount <= 1.0:
            raise ValueError(f"Salt-and-pepper amount must be in [0, 1], got {self.amount}")
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"Salt-and-pepper ratio must be in [0, 1], got {self.ratio}")

    @property
    def is_identity(self) -> bool:
        return self.amount == 0


@dataclass(frozen=True)
class PoissonNoise:
    peak: float  # photon count of a full-scale pixel; inf disables the noise

    def __post_init__(self):
        if not self.peak > 0:
            raise ValueError(f"Poisson peak must be > 0, got {self.peak}")

    @property
    def is_identity(self) -> bool:
        return math.isinf(self.peak)


NoiseModel = Union[GaussianNoise, SaltPepperNoise, PoissonNoise]

_MODEL_BUILDERS = {
    "gaussian": GaussianNoise,
    "saltpepper": SaltPepperNoise,
    "poisson": PoissonNoise,
}


def build_noise_model(name: str, params: Mapping[str, float]) -> NoiseModel:
    """
    Builds a noise model from its CLI name and keyword parameters.

    Args:
        name (str): ``gaussian``, ``saltpepper`` or ``poisson``.
        params (Mapping[str, float]): Constructor arguments, e.g. ``{"variance": 0.01}``.

    Returns:
        NoiseModel: Validated model.
    """
    try:
        builder = _MODEL_BUILDERS[name]
    except KeyError:
        raise ValueError(f"Unknown noise model '{name}'; choose from {sorted(_MODEL_BUILDERS)}") from None
    try:
        return builder(**{k: float(v) for k, v in params.items()})
    except TypeError as exc:
        raise ValueError(f"Bad parameters for {name} noise: {exc}") from None


def add_noise(img: np.ndarray, model: NoiseModel, seed: Union[int, np.random.SeedSequence]) -> np.ndarray:
    """
    Returns a noisy copy of ``img``; deterministic for a fixed seed.

    Args:
        img (np.ndarray): uint8 image or float image in [0, 1].
        model (NoiseModel): Noise to inject.
        seed (int | SeedSequence): Random seed.

    Returns:
        np.ndarray: Same shape and dtype as the input, values clamped to the valid range.
    """
    if model.is_identity:
        return img.copy()

    rng = np.random.default_rng(seed)
    normalised = img_as_float(img)

    if isinstance(model, GaussianNoise):
        noisy = random_noise(normalised, mode="gaussian", var=model.variance, rng=rng, clip=True)
    elif isinstance(model, SaltPepperNoise):
        noisy = random_noise(normalised, mode="s&p", amount=model.amount, salt_vs_pepper=model.ratio, rng=rng, clip=True)
    elif isinstance(model, PoissonNoise):
        noisy = np.clip(rng.poisson(normalised * model.peak) / model.peak, 0.0, 1.0)
    else:
        raise ValueError(f"Unsupported noise model: {model!r}")

    if img.dtype == np.uint8:
        return img_as_ubyte(noisy)
    return noisy.astype(img.dtype, copy=False)


class NoiseInjector:
    """
    Applies one noise model to every frame of a directory, writing same-named files.
    """

    def __init__(self, model: NoiseModel, seed: int):
        self.model = model
        self.seed = seed
        self.logger = SingletonLogger.getInstance(self.__class__.__name__).logger

    def frame_seed(self, frame: int) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.seed, frame])

    def corrupt_frame(self, frames: FrameSequence, frame: int, output_dir: Path) -> Path:
        source = frames.path_for(frame)
        target = output_dir / source.name
        if self.model.is_identity:
            shutil.copyfile(source, target)
        else:
            write_frame(target, add_noise(frames.read_frame(frame), self.model, self.frame_seed(frame)))
        return target

    @log_exceptions("Batch noise injection failed")
    def corrupt_directory(self, frames_dir: Union[str, Path], output_dir: Union[str, Path], max_workers: int = 1) -> Dict[int, Path]:
        """
        Corrupts every frame in parallel threads.

        Args:
            frames_dir (str | Path): Source frame directory.
            output_dir (str | Path): Destination directory (created if missing).
            max_workers (int): Number of threads.

        Returns:
            Dict[int, Path]: Written file per frame, in frame order.
        """
        frames = FrameSequence(frames_dir)
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        self.logger.info(f"🧪 Injecting {self.model} into {len(frames.frame_numbers())} frames with {max_workers} workers")

        written: Dict[int, Path] = {}
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            futures = {
                executor.submit(self.corrupt_frame, frames, frame, output_dir): frame
                for frame in frames.frame_numbers()
            }
            for future in as_completed(futures):
                written[futures[future]] = future.result()

        self.logger.info(f"✅ Wrote {len(written)} noisy frames to {output_dir}")
        return dict(sorted(written.items()))
