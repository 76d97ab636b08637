"""Exception hierarchy. Each class maps to one failure kind named in the docs."""


class TractEquityError(Exception):
    """Base class for all package errors."""


# ingest
class MalformedGeoId(TractEquityError, ValueError):
    pass


class MissingColumn(TractEquityError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class NegativeValue(TractEquityError, ValueError):
    pass


class ShareSumOutOfRange(TractEquityError, ValueError):
    pass


class UnknownTract(TractEquityError, ValueError):
    pass


# entity classification
class EmptyName(TractEquityError, ValueError):
    pass


class NotAnIndividual(TractEquityError, ValueError):
    pass


class UnparseableName(TractEquityError, ValueError):
    pass


# imputation
class InvalidDistribution(TractEquityError, ValueError):
    pass


class BothPriorsMissing(TractEquityError, LookupError):
    pass


class DuplicateParcel(TractEquityError, ValueError):
    pass


class MissingPrediction(TractEquityError, LookupError):
    pass


class UnclassifiedParcel(TractEquityError, ValueError):
    pass


# analytics
class MixedGeoids(TractEquityError, ValueError):
    pass


class GeoidMismatch(TractEquityError, ValueError):
    pass


class ZeroTotalValue(TractEquityError, ValueError):
    pass


class NoIndividualOwners(TractEquityError, ValueError):
    pass


# evaluation
class EmptyInput(TractEquityError, ValueError):
    pass


class FnrOutOfRange(TractEquityError, ValueError):
    pass


class InsufficientData(TractEquityError, ValueError):
    pass


# reporting / synthetic data
class TooFewPoints(TractEquityError, ValueError):
    pass


class InvalidSpec(TractEquityError, ValueError):
    pass


class ConfigError(TractEquityError):
    pass
