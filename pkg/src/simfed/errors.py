"""Exception types shared across the package."""


class SimfedError(Exception):
    """Base class for all errors raised by this package."""


class KeyGenerationError(SimfedError):
    """Prime search or key construction failed within the attempt budget."""


class KeyMismatchError(SimfedError):
    """Operation mixed ciphertexts or keys from different keypairs."""


class DecryptionError(SimfedError):
    """Ciphertext is not a valid residue under the given key."""


class DomainError(SimfedError, ValueError):
    """Argument outside the operation's documented domain."""


class EncodingRangeError(SimfedError, ValueError):
    """Fixed-point magnitude or accumulated-scale budget exceeded."""


class DegenerateWeightsError(SimfedError):
    """Zero-norm weight vector cannot be normalized for similarity."""


class DimensionError(SimfedError, ValueError):
    """Array shapes disagree with the model or vector contract."""


class UsageError(SimfedError, ValueError):
    """Operation invoked with unusable inputs (e.g. an empty dataset)."""


class ProtocolOrderError(SimfedError):
    """Protocol step invoked out of order (e.g. double initialization)."""


class FormatError(SimfedError, ValueError):
    """Malformed file or wire payload (bad magic, truncation, version)."""


class ConfigError(SimfedError, ValueError):
    """Run configuration is inconsistent or infeasible."""
