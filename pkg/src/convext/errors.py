"""Exception hierarchy shared by all modules."""


class ConvextError(Exception):
    """Base class for all library errors."""


class ShapeError(ConvextError):
    """Grid specs of two operands do not match."""


class DomainError(ConvextError):
    """A point lies outside a grid box, or an integrand is invalid
    (infinite exponent, no finite values)."""


class ConfigurationError(ConvextError):
    """A required configuration is missing: no t=0 node, dual grid does
    not cover the slope range, bad parameters."""


class InputError(ConvextError):
    """Invalid user input: malformed problem files, non-convex inputs,
    out-of-range parameters."""


class ContractViolationError(ConvextError):
    """An extender oracle returned an extension whose restriction does
    not match the source it was asked to extend."""
