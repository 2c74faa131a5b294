"""Exception hierarchy shared by every stage of the pipeline."""


class PolicyFlowError(Exception):
    """Base class for all errors raised by policyflow."""


# segmentation
class EmptyDocument(PolicyFlowError):
    pass


class MalformedHtml(PolicyFlowError):
    pass


class IndexOutOfRange(PolicyFlowError, IndexError):
    pass


# knowledge base
class SchemaViolation(PolicyFlowError):
    pass


class UnknownKind(SchemaViolation):
    pass


class EmptyIndex(PolicyFlowError):
    pass


class ProviderUnavailable(PolicyFlowError):
    pass


# llm gateway
class BackendError(PolicyFlowError):
    pass


class MockMiss(BackendError):
    """The mock backend has no fixture for a request."""


class ParseFailure(PolicyFlowError):
    pass


class LabelOutOfVocabulary(PolicyFlowError):
    def __init__(self, label, allowed):
        self.label = label
        self.allowed = sorted(allowed)
        super().__init__(f"label {label!r} not in vocabulary {self.allowed}")


# graph / analysis / cli
class UnsupportedFormat(PolicyFlowError):
    pass


class EmptyCorpus(PolicyFlowError):
    pass


class ConfigError(PolicyFlowError):
    pass


class SchemaMismatch(PolicyFlowError):
    pass
