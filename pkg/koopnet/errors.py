""" Exceptions raised by koopnet. Everything derives from KoopnetError so callers (and the
    management commands) can catch the whole family in one place.
"""


class KoopnetError(Exception):
    pass


class DimensionMismatch(KoopnetError, ValueError):
    pass


class PlantDivergedError(KoopnetError):
    def __init__(self, message, last_state=None, step=None):
        super(PlantDivergedError, self).__init__(message)
        self.last_state = last_state
        self.step = step


class InvalidPowerError(KoopnetError, ValueError):
    pass


class BracketingError(KoopnetError):
    def __init__(self, message, low=None, high=None):
        super(BracketingError, self).__init__(message)
        self.low = low
        self.high = high


class StaleCacheError(KoopnetError):
    pass


class HorizonError(KoopnetError, ValueError):
    pass


class NonFiniteLossError(KoopnetError):
    def __init__(self, message, lr=None, epoch=None, batch=None):
        super(NonFiniteLossError, self).__init__(message)
        self.lr = lr
        self.epoch = epoch
        self.batch = batch


class UnstabilizableModelError(KoopnetError):
    def __init__(self, message, spectral_radius=None, iterations=None):
        super(UnstabilizableModelError, self).__init__(message)
        self.spectral_radius = spectral_radius
        self.iterations = iterations


class RankDeficiencyError(KoopnetError):
    pass


class MissingArtifactError(KoopnetError):
    def __init__(self, path, what="artifact"):
        super(MissingArtifactError, self).__init__("Missing {}: {}".format(what, path))
        self.path = path


class InvariantViolation(KoopnetError):
    def __init__(self, message, step=None):
        super(InvariantViolation, self).__init__(message)
        self.step = step
