"""Exception types raised across the package."""


class GreenFLError(Exception):
    """Base class for all package errors."""


# power profiles
class MalformedDocument(GreenFLError, ValueError):
    pass


class NonNumericValue(GreenFLError, ValueError):
    pass


class EmptyProfile(GreenFLError, ValueError):
    pass


class MissingField(GreenFLError, LookupError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"missing field {self.name!r}"


class NoSimilarDevice(GreenFLError, LookupError):
    pass


# carbon
class UnknownCountry(GreenFLError, LookupError):
    def __init__(self, code: str):
        super().__init__(code)
        self.code = code

    def __str__(self) -> str:
        return f"unknown country code {self.code!r}"


# fl core
class EmptyClientData(GreenFLError, ValueError):
    pass


class EmptyBuffer(GreenFLError, ValueError):
    pass


class ZeroProbability(GreenFLError, ValueError):
    pass


class EmptyHeldout(GreenFLError, ValueError):
    pass


# simulation
class InvalidSpec(GreenFLError, ValueError):
    pass


class InsufficientPopulation(GreenFLError, ValueError):
    pass


# predictor
class DegenerateX(GreenFLError, ValueError):
    pass


class MixedModes(GreenFLError, ValueError):
    pass


class ConfigError(GreenFLError, ValueError):
    """Invalid configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message
