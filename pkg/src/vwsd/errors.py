"""Exception types shared across the pipeline."""


class VwsdError(Exception):
    """Base class for everything this package raises on purpose."""


class DatasetError(VwsdError):
    pass


class EmbeddingError(VwsdError):
    pass


class CaptionError(VwsdError):
    pass


class RankingError(VwsdError):
    pass


class QaError(VwsdError):
    pass


class ConfigError(VwsdError):
    pass


class GatewayError(VwsdError):
    """Completion endpoint failure (transport, protocol, or policy)."""


class TransientError(GatewayError):
    """Retryable failure: connection trouble or a 5xx response."""


class RateLimitedError(GatewayError):
    """HTTP 429; carries the server's Retry-After hint when present."""

    def __init__(self, message: str = "rate limited", retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class AuthenticationError(GatewayError):
    """Credentials rejected; retrying cannot help."""


class RetriesExhaustedError(GatewayError):
    pass


class ReplayGapError(GatewayError):
    """Offline mode needed a completion that is not in the cache."""

    def __init__(self, cache_key: str):
        super().__init__(f"offline replay gap: no cache entry for key {cache_key}")
        self.cache_key = cache_key
