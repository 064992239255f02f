"""Exception hierarchy shared across the pipeline."""


class WalkerForgeError(Exception):
    """Base class for all walkerforge errors."""


class UnknownMaterial(WalkerForgeError):
    pass


class InvalidSection(WalkerForgeError):
    pass


class InfeasibleDesign(WalkerForgeError):
    pass


class InvalidSampleRequest(WalkerForgeError):
    pass


class DimensionMismatch(WalkerForgeError):
    pass


class EmptyBatch(WalkerForgeError):
    pass


class MeshError(WalkerForgeError):
    pass


class MechanismDetected(WalkerForgeError):
    pass


class SimulationFailure(WalkerForgeError):
    def __init__(self, message, design_id=None):
        super().__init__(message)
        self.design_id = design_id


class InvalidStabilityInput(WalkerForgeError):
    pass


class IncompleteRecord(WalkerForgeError):
    pass


class InsufficientData(WalkerForgeError):
    pass


class EncodingError(WalkerForgeError):
    pass


class NoCounterfactualsFound(WalkerForgeError):
    def __init__(self, message, unmet=None):
        super().__init__(message)
        self.unmet = list(unmet) if unmet else []


class UnreliableTarget(WalkerForgeError):
    pass


class InvalidConfig(WalkerForgeError):
    pass
