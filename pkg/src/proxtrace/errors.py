class ProxtraceError(Exception):
    pass


class ScenarioError(ProxtraceError):
    """Scenario definition cannot be simulated (bad trajectory, missing agent...)."""


class DataFormatError(ProxtraceError):
    """Input file does not follow the expected schema."""


class DegenerateDataError(ProxtraceError):
    """Data is well-formed but unusable, e.g. only one class present."""


class TrainingError(ProxtraceError):
    pass


class PredictionError(ProxtraceError):
    pass
