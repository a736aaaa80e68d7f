# csmil/core/errors.py
from typing import Any, Optional


class CsmilError(Exception):
    """Base error; exit_code is what the CLI returns for it"""

    exit_code: int = 3

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigurationError(CsmilError):
    exit_code = 2


class PreconditionError(CsmilError):
    exit_code = 2


class DataFormatError(CsmilError):
    exit_code = 3


class InvalidBagError(DataFormatError):
    pass


class DegenerateClusteringError(CsmilError):
    exit_code = 3


class StaleCacheError(CsmilError):
    exit_code = 3


class DivergenceError(CsmilError):
    exit_code = 3


class UndefinedMetricError(CsmilError):
    """AUC is undefined; `partial` still holds accuracy / F1"""

    exit_code = 3

    def __init__(self, detail: str, partial: Optional[Any] = None):
        super().__init__(detail)
        self.partial = partial
