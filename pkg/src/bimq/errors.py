"""Exception hierarchy shared across the package."""


class BimqError(Exception):
    """Base class for all domain errors raised by this package."""


# --- datastore ---

class ParseError(BimqError):
    """A document (store file, cassette, dataset, catalog) is malformed."""


class SchemaViolation(BimqError):
    """A record or schema breaks a store invariant."""


class UnknownCategory(BimqError):
    pass


class UnknownParameter(BimqError):
    pass


class InvalidQuery(BimqError):
    """A structured query breaks its own invariants."""


# --- prompt library ---

class UnparseableOutput(BimqError):
    """Model output does not match the expected answer grammar."""


class UnknownIntent(BimqError):
    """Bracketed intent token is not one of the three known intents."""


class MissingField(BimqError):
    """Answer grammar matched partially; a required field is absent or empty."""


class BudgetInfeasible(BimqError):
    """Untruncatable prompt sections alone exceed the character budget."""


# --- llm client ---

class BackendError(BimqError):
    """Base class for text-generation backend failures."""


class BackendUnavailable(BackendError):
    """Remote endpoint unreachable after the configured retries."""


class Timeout(BackendError):
    """Remote call exceeded its deadline after the configured retries."""


class RateLimited(BackendError):
    """Remote endpoint kept returning 429 after honoring retry-after."""


class ScriptExhausted(BackendError):
    """Scripted backend ran out of canned replies."""


class CassetteMiss(BackendError):
    """Replay backend has no recorded response for the prompt."""


# --- evaluator ---

class MissingColumn(BimqError):
    """Dataset file lacks a required annotation column."""


class EmptyGroupSet(BimqError):
    """No dataset rows match the requested sampling context."""


# --- service ---

class BindError(BimqError):
    """Service could not bind its address."""
