# src/utils/errors.py


class ScoutError(Exception):
    """Base class for every domain error raised by corridor-scout."""


class ConfigError(ScoutError, ValueError):
    """Invalid scenario, flag combination or configuration value."""


class BudgetExceeded(ScoutError, ValueError):
    """Exhaustive enumeration would exceed the configured budget."""


class DegenerateEvidence(ScoutError, ValueError):
    """Every hypothesis, NOTA included, has likelihood exactly zero."""


class NoConsistentMap(ScoutError, ValueError):
    """No map satisfies the noiseless evidence."""


class ZeroProbabilityEvidence(ScoutError, ValueError):
    """The evidence has probability zero under the network."""


class OutcomesNotExhaustive(ScoutError, ValueError):
    """Proposal outcome likelihoods do not sum to one for some hypothesis."""


class NotAdjacent(ScoutError, ValueError):
    """Two regions do not share a boundary at the given level."""


class AllDetectorsUsed(ScoutError, RuntimeError):
    """Every detector has already fired at the location."""


class Unreachable(ScoutError, RuntimeError):
    """No route exists at the requested abstraction."""
