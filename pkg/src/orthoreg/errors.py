"""Exception types raised across the package."""


class OrthoregError(Exception):
    pass


class PanelFormatError(OrthoregError, ValueError):
    """Malformed longitudinal input: missing columns, ragged panels, bad cells."""


class SingularDesignError(OrthoregError, ValueError):
    """The design matrix (or information matrix) is numerically rank deficient."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class SeparationError(OrthoregError):
    """Binary-response likelihood is monotone: the MLE does not exist."""


class MonotoneLikelihoodError(OrthoregError):
    """Cox partial likelihood increases without bound along some direction."""


class NonIdentifiableError(OrthoregError):
    """Cox partial likelihood is flat in some direction (no information)."""


class FamilyMismatchError(OrthoregError, ValueError):
    pass


class BootstrapError(OrthoregError):
    pass


class ConfigError(OrthoregError, ValueError):
    pass
