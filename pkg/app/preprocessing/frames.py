import re
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import imageio.v3 as iio
import numpy as np
from natsort import natsorted
from skimage.color import rgb2gray
from skimage.util import img_as_ubyte

from utils.logger import SingletonLogger, log_exceptions

FRAME_SUFFIXES = (".png", ".tif", ".tiff")
_TRAILING_NUMBER = re.compile(r"(\d+)(?!.*\d)")


class Loader(ABC):
    """
    Abstract base class for frame sources.
    """

    @abstractmethod
    def frame_numbers(self) -> List[int]:
        """
        Frame indices available from this source, ascending.
        """
        pass

    @abstractmethod
    def read_frame(self, frame: int) -> np.ndarray:
        """
        Loads one frame as an 8-bit grayscale array.
        """
        pass


class FrameSequence(Loader):
    """
    A directory of pre-extracted 8-bit grayscale PNG/TIFF frames.

    Files are ordered naturally by name; the frame index is the last integer in
    the file stem (``frame_000120.png`` is frame 120). Stems without digits get
    their position in the sorted listing.
    """

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)
        self.logger = SingletonLogger.getInstance(self.__class__.__name__).logger
        if not self.directory.is_dir():
            raise FileNotFoundError(f"Frame directory not found: {self.directory}")
        self.paths: Dict[int, Path] = self._index_files()
        self.logger.info(f"🎞️ Indexed {len(self.paths)} frames in {self.directory}")

    def _index_files(self) -> Dict[int, Path]:
        names = natsorted(p.name for p in self.directory.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)
        index: Dict[int, Path] = {}
        for position, name in enumerate(names):
            match = _TRAILING_NUMBER.search(Path(name).stem)
            frame = int(match.group(1)) if match else position
            if frame in index:
                raise ValueError(f"Frame {frame} appears twice: {index[frame].name} and {name}")
            index[frame] = self.directory / name
        return dict(sorted(index.items()))

    def frame_numbers(self) -> List[int]:
        return list(self.paths)

    def frame_size(self) -> Optional[Tuple[int, int]]:
        """(width, height) of the first frame, or None for an empty directory."""
        if not self.paths:
            return None
        height, width = self.read_frame(next(iter(self.paths))).shape[:2]
        return width, height

    def path_for(self, frame: int) -> Path:
        return self.paths[frame]

    @log_exceptions("Failed to read frame")
    def read_frame(self, frame: int) -> np.ndarray:
        """
        Reads a frame and normalises it to a 2-D uint8 array.

        Args:
            frame (int): Frame index.

        Returns:
            np.ndarray: Grayscale frame, shape (height, width), dtype uint8.
        """
        return to_gray_ubyte(iio.imread(self.paths[frame]))


def to_gray_ubyte(image: np.ndarray) -> np.ndarray:
    if image.ndim == 3:
        channels = image.shape[-1]
        if channels == 4:
            image = image[..., :3]
        image = rgb2gray(image) if image.shape[-1] == 3 else image[..., 0]
    if image.dtype == np.uint8:
        return image
    return img_as_ubyte(image)


def write_frame(path: Union[str, Path], image: np.ndarray) -> None:
    iio.imwrite(path, image)
