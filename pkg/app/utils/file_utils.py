import json
from pathlib import Path
from typing import Any, Dict, List, Union

from utils.logger import SingletonLogger, log_exceptions


class FileUtils:
    """
    Small filesystem helpers shared by the pipeline stages.
    """

    @staticmethod
    @log_exceptions("Directory creation failed")
    def ensure_directories(paths: List[Union[str, Path]]) -> None:
        """
        Ensures that a list of directory paths exist, and creates them if not.

        Args:
            paths (List[str | Path]): Directory paths to ensure.
        """
        logger = SingletonLogger.getInstance("PathUtils").logger
        for path in paths:
            Path(path).mkdir(parents=True, exist_ok=True)
            logger.debug(f"✅ Directory ready: {path}")

    @staticmethod
    @log_exceptions("Failed to write JSON file")
    def write_json(path: Union[str, Path], data: Dict[str, Any]) -> Path:
        """
        Writes ``data`` as indented JSON with sorted keys, so equal data gives equal bytes.

        Args:
            path (str | Path): Destination file.
            data (Dict[str, Any]): JSON-serialisable mapping.

        Returns:
            Path: The written file.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
        return path
