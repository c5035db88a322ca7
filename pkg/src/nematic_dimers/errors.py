"""Exception types shared across the package."""


class NematicDimersError(Exception):
    """Base class for package errors."""


class ValidationError(NematicDimersError, ValueError):
    """Invalid input parameters or configuration."""


class SizeCapError(NematicDimersError):
    """An exact computation was requested beyond its size cap."""


class DegeneracyError(NematicDimersError, ArithmeticError):
    """Coincident or complex eigenvalues of the chain transfer matrix."""


class StructuralError(NematicDimersError):
    """A configuration does not have the structure the decomposition expects."""
