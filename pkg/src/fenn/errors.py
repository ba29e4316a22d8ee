"""Exception hierarchy shared by every fenn module.

All library errors derive from FennError so callers can catch one type at
the CLI boundary and map it to an exit code.
"""


class FennError(Exception):
    """Base class for all errors raised by this package."""


class NotInRange(FennError):
    """No exponent within the search bound matches the decryption target.

    Raised by bounded discrete-log recovery. Signals either a blown
    quantization bound, a key/operand mismatch that survived the cheap
    checks, or an inexact division whose mod-p quotient is astronomically
    large.
    """


class LengthMismatch(FennError):
    """Vector operands whose lengths must agree do not."""


class DivisorZero(FennError):
    """Division key requested for an operand congruent to zero mod p."""


class KeyMismatch(FennError):
    """A function key was presented with a ciphertext it is not bound to."""


class ShapeMismatch(FennError):
    """Tensor or matrix shapes are incompatible for the requested operation."""


class UnsupportedFunction(FennError):
    """Requested function is not in the permitted function set."""


class OutOfRange(FennError):
    """A value exceeds the fixed-point codec's representable range."""


class MalformedInput(FennError):
    """A file or byte stream does not match its declared format."""


class MalformedRequest(FennError):
    """A key request is structurally invalid (missing or inconsistent fields)."""


class DomainError(FennError):
    """A mathematical function was evaluated outside its domain."""
