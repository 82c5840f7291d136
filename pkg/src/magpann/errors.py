"""Exception types shared across the package."""


class SingularTensorError(ValueError):
    """A tensor that must be invertible is (numerically) singular."""


class InvalidDeformationError(ValueError):
    """A deformation gradient with non-positive determinant, or a degenerate state."""


class ContractViolation(ValueError):
    """An argument breaks a documented precondition (asymmetric input, non-unit direction, ...)."""


class ConfigurationError(ValueError):
    """Missing or inconsistent configuration (unfitted normalization, empty dataset, bad ranges)."""
