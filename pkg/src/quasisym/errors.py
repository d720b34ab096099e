"""Exception types shared across the package."""


class QuasisymError(Exception):
    """Base class for every error raised by this package."""


# expression language

class ExprSyntaxError(QuasisymError):
    def __init__(self, offset, expected, source=""):
        self.offset = offset
        self.expected = tuple(expected)
        self.source = source
        want = ", ".join(self.expected) if self.expected else "end of input"
        super().__init__(f"syntax error at byte {offset}: expected {want}")


class UnknownIdentifier(QuasisymError):
    def __init__(self, name, offset=None):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier {name!r}")


class EvalError(QuasisymError):
    """Failure while evaluating a coefficient expression."""


class DomainError(EvalError):
    pass


class StencilOutOfDomain(EvalError):
    pass


# small matrix algebra

class IndexOutOfRange(QuasisymError, IndexError):
    pass


class OrderTooLarge(QuasisymError, ValueError):
    pass


class EpsOutOfRange(QuasisymError, ValueError):
    pass


class SingularAtSample(QuasisymError):
    pass


class PencilSolveFailure(QuasisymError):
    pass


class SampleNotInSM(QuasisymError, ValueError):
    pass


class DegenerateDenominator(QuasisymError):
    pass


# roots and lower order terms

class NonHyperbolic(QuasisymError):
    def __init__(self, max_imag, t=None, xi=None):
        self.max_imag = max_imag
        self.t = t
        self.xi = xi
        super().__init__(f"complex characteristic roots (max |imag| = {max_imag:.3e}) at t={t}, xi={xi}")


class UnsupportedOrder(QuasisymError, ValueError):
    pass


class LevelOutOfRange(QuasisymError, ValueError):
    pass


# evolution and fitting

class StepUnderflow(QuasisymError):
    pass


class TooManyZeros(QuasisymError):
    pass


class NonSymmetricSpectrum(UserWarning):
    pass


class OverflowGuard(QuasisymError, ValueError):
    pass


class InsufficientRange(QuasisymError, ValueError):
    pass


class NonDecaying(QuasisymError, ValueError):
    pass


# configuration

class ConfigError(QuasisymError):
    def __init__(self, line, message):
        self.line = line
        self.message = message
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
