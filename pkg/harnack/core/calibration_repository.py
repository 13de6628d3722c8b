import logging
import os
import threading
from typing import Optional, Tuple

import cachetools
from pympler.asizeof import asizeof

from harnack.core.calibration import CalibrationModel
from harnack.core.metrics import record_event


class CalibrationRepository:
    """
    Interface to retrieve and update the calibrated constants. Injected into `ScenarioRunner` \
    users through the command line.
    """

    def get(self, n: int, p: float, alpha: float) -> Tuple[Optional[CalibrationModel], bool]:
        """
        Return the calibration for the specified parameters.

        :param n: Dimension.
        :param p: Curvature exponent.
        :param alpha: Gradient weight.
        :return: a `CalibrationModel` instance and the boolean which indicates whether \
                 a cache miss happened. Returns None instead of the model \
                 in case no calibration was found.
        """
        raise NotImplementedError

    def set(self, model: CalibrationModel) -> str:
        """
        Put the new calibration into the storage.

        :param model: The instance of the model to store.
        :return: Where the model was stored.
        """
        raise NotImplementedError

    def init(self):
        """
        Initialize the persistent data structures of this storage.
        """
        raise NotImplementedError

    def shutdown(self):
        """
        Free the resources allocated by the storage.
        """
        raise NotImplementedError


class FileCalibrationRepository(CalibrationRepository):
    """Stores the calibration models as asdf files under a file system root."""

    _log = logging.getLogger("FileCalibrationRepository")

    def __init__(self, fs_root: str, max_cache_mem: int, ttl: int):
        """
        Initialize a new instance of FileCalibrationRepository.

        :param fs_root: Root directory where to store the models.
        :param max_cache_mem: Maximum memory size to use for model cache (in bytes).
        :param ttl: Time-to-live for each model in the cache (in seconds).
        """
        self.fs_root = fs_root
        self._cache = cachetools.TTLCache(maxsize=max_cache_mem, ttl=ttl, getsizeof=asizeof)
        self._cache_lock = threading.Lock()

    def __repr__(self) -> str:
        """Represent the repository as a eval()-able string."""
        return "FileCalibrationRepository(fs_root=%r, max_cache_mem=%r, ttl=%r)" % (
            self.fs_root, self._cache.maxsize, self._cache.ttl)

    def __str__(self) -> str:
        """Summarize the repository as a string."""
        return "FileCalibrationRepository(fs=%s)" % self.fs_root

    @staticmethod
    def cache_key(n: int, p: float, alpha: float) -> str:
        """Compose the cache key and the file name stem for the given parameters."""
        return "n%d_p%r_alpha%r" % (n, float(p), float(alpha))

    def path(self, n: int, p: float, alpha: float) -> str:
        """Return the file of the calibration for the given parameters."""
        return os.path.join(self.fs_root, "%s.asdf" % self.cache_key(n, p, alpha))

    def get(self, n: int, p: float, alpha: float
            ) -> Tuple[Optional[CalibrationModel], bool]:  # noqa: D102
        cache_key = self.cache_key(n, p, alpha)
        record_event("FileCalibrationRepository.cache.length", len(self._cache))
        with self._cache_lock:
            model = self._cache.get(cache_key)
        if model is not None:
            self._log.debug("used cache for %s", cache_key)
            record_event("FileCalibrationRepository.cache.hit", 1)
            return model, False
        record_event("FileCalibrationRepository.cache.miss", 1)
        path = self.path(n, p, alpha)
        if not os.path.exists(path):
            self._log.debug("no calibration found for %s", cache_key)
            return None, True
        model = CalibrationModel().load(path)
        with self._cache_lock:
            try:
                self._cache[cache_key] = model
            except ValueError:
                self._log.warning("%s is too large for the cache", cache_key)
        self._log.debug("loaded %s from %s", cache_key, path)
        return model, True

    def set(self, model: CalibrationModel) -> str:  # noqa: D102
        path = self.path(model.n, model.p, model.alpha)
        model.save(path)
        with self._cache_lock:
            self._cache.pop(self.cache_key(model.n, model.p, model.alpha), None)
        self._log.debug("set %s", path)
        return path

    def init(self):  # noqa: D102
        self._log.info("initializing %s", self.fs_root)
        os.makedirs(self.fs_root, exist_ok=True)

    def shutdown(self):  # noqa: D102
        self._log.debug("shutting down")
        with self._cache_lock:
            self._cache.clear()
