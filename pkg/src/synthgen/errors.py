"""Exception hierarchy shared by all stages of the pipeline."""


class SynthGenError(Exception):
    """Base class for all errors raised by synthgen."""


class ConfigError(SynthGenError):
    """Configuration could not be parsed or violates a bound.

    ``violations`` holds the individual messages when the error comes
    from validation rather than parsing.
    """

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class FrameIntervalError(ConfigError, ValueError):
    """A render interval violates ``0 <= start <= end <= scene_count - 1``."""


class AssetError(SynthGenError):
    """A mesh, texture or environment map failed to load."""


class SamplingError(SynthGenError):
    """A scene could not be resolved from the configuration and catalog."""


class EvaluationError(SynthGenError):
    """Detection or ground-truth input is unusable for evaluation."""
