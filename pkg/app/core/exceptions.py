"""
Custom exceptions for hierkrig.
Provides specific error types for search spaces, kernels, models and the harness.
"""

from typing import Optional


class HierKrigException(Exception):
    """Base exception class for hierkrig."""

    def __init__(
        self,
        message: str,
        detail: Optional[str] = None,
        error_code: Optional[str] = None
    ) -> None:
        self.message = message
        self.detail = detail
        self.error_code = error_code
        super().__init__(self.message)


class SpaceException(HierKrigException):
    """Exception raised for invalid search spaces or points."""
    pass


class KernelDomainException(HierKrigException):
    """Exception raised when a kernel is applied outside its domain."""
    pass


class RepairException(HierKrigException):
    """Exception raised when the definiteness repair cannot be computed."""
    pass


class ModelFitException(HierKrigException):
    """Exception raised when no feasible Kriging model can be fitted."""
    pass


class InputException(HierKrigException):
    """Exception raised for malformed numeric input."""
    pass


class OptimizationException(HierKrigException):
    """Exception raised for malformed optimization problems."""
    pass


class DomainException(HierKrigException):
    """Exception raised when the test function is evaluated outside its box."""
    pass


class ClassificationException(HierKrigException):
    """Exception raised for test instances on a situation boundary."""
    pass


class StatisticsException(HierKrigException):
    """Exception raised for rank tables that cannot be analyzed."""
    pass


class ConfigurationException(HierKrigException):
    """Exception raised for configuration-related errors."""
    pass
