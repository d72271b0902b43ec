import numpy as np


class PvServoError(Exception):
    pass


class SingularMassError(PvServoError, ValueError):
    pass


class BehindCameraError(PvServoError, ValueError):
    pass


class CoincidentPointsError(PvServoError, ValueError):
    pass


class RankDeficientError(PvServoError, np.linalg.LinAlgError):
    pass


class FeatureLossError(PvServoError, RuntimeError):
    pass


class UnknownPresetError(PvServoError, KeyError):
    pass


class NonFiniteInputError(PvServoError, ValueError):
    pass
