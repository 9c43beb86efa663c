"""Exception hierarchy shared across the package."""


class LeaprError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(LeaprError):
    """Invalid run configuration (bad paths, unknown adapter, bad params)."""


class DatasetError(LeaprError):
    """Malformed dataset file or record."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TemplateError(LeaprError):
    """Prompt template is missing a required slot."""


class ProposerTransportError(LeaprError):
    """LLM backend failed after exhausting retries."""


class MissingFeatureError(LeaprError):
    """A feature value needed on a routing path is absent or non-finite."""

    def __init__(self, feature_id):
        super().__init__(f"missing or non-finite value for feature {feature_id!r}")
        self.feature_id = feature_id


class ExecutorError(LeaprError):
    """A feature failed to load or evaluate.

    ``kind`` is one of ``load_error``, ``runtime_exception``, ``timeout``,
    ``non_finite``; ``example_index`` points into the batch that failed,
    when applicable.
    """

    def __init__(self, kind, message, example_index=None):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.message = message
        self.example_index = example_index


class RuntimeAbort(LeaprError):
    """A training run aborted mid-way; a resumable checkpoint was written."""
