from typing import Optional

from siamprint.constants import (
    EXIT_CONFIG,
    EXIT_GRADCHECK,
    EXIT_IO,
    EXIT_NUMERIC,
)


class SiamPrintError(Exception):
    exit_code = EXIT_CONFIG

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ContractViolation(SiamPrintError, ValueError):
    """An operation was called with arguments outside its contract."""

    exit_code = EXIT_CONFIG


class ConfigError(SiamPrintError):
    exit_code = EXIT_CONFIG


class DataIOError(SiamPrintError):
    exit_code = EXIT_IO

    def __init__(self, detail: str, sample_id: Optional[str] = None):
        if sample_id is not None:
            detail = f'[sample {sample_id}] {detail}'
        super().__init__(detail)
        self.sample_id = sample_id


class DivergenceError(SiamPrintError):
    exit_code = EXIT_NUMERIC


class GradcheckFailed(SiamPrintError):
    exit_code = EXIT_GRADCHECK
