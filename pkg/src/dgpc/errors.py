"""Exception types raised across the package."""

import numpy as np


class ConfigError(ValueError):
    """Invalid run configuration. ``fields`` lists every offending key."""

    def __init__(self, message, fields=()):
        super().__init__(message)
        self.fields = list(fields)


class DegenerateMeasureError(np.linalg.LinAlgError):
    """Gram matrix could not be factorized even after jitter escalation."""

    def __init__(self, message, pivot):
        super().__init__(message)
        self.pivot = pivot


class MissingMomentError(KeyError):
    pass


class RankDeficiencyError(ValueError):
    def __init__(self, message, mode):
        super().__init__(message)
        self.mode = mode


class BlowUpError(FloatingPointError):
    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class SnapshotError(IOError):
    pass
