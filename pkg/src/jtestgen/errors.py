"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class JTestGenError(Exception):
    """Base class for all errors raised by jtestgen."""


class ParseError(JTestGenError):
    def __init__(self, path: str, location: tuple[int, int] | None = None, message: str = "syntax error"):
        self.path = path
        self.location = location
        where = f"{path}:{location[0]}:{location[1]}" if location else path
        super().__init__(f"{where}: {message}")


class NoFocalCall(JTestGenError):
    """The analysed context never invokes the focal method."""


class EmptyCorpus(JTestGenError):
    """Normalization was requested over zero feature vectors."""


class PromptOverflow(JTestGenError):
    """The mandatory part of a prompt alone exceeds the token budget."""


class ConfigError(JTestGenError):
    pass


# --- EvoSuite -------------------------------------------------------------

class ToolMissing(JTestGenError):
    pass


class GenerationTimeout(JTestGenError):
    def __init__(self, budget: float):
        self.budget = budget
        super().__init__(f"EvoSuite exceeded its budget of {budget}s")


class GenerationFailure(JTestGenError):
    def __init__(self, stderr_excerpt: str):
        self.stderr_excerpt = stderr_excerpt
        super().__init__(f"EvoSuite failed: {stderr_excerpt}")


# --- gateway --------------------------------------------------------------

class GatewayError(JTestGenError):
    pass


class RateLimited(GatewayError):
    pass


class TokenOverflow(GatewayError):
    pass


class TransportError(GatewayError):
    pass


class TranscriptMiss(GatewayError):
    def __init__(self, request_key: str):
        self.request_key = request_key
        super().__init__(f"no transcript entry for request {request_key}")


# --- toolchain ------------------------------------------------------------

class ToolchainError(JTestGenError):
    pass


class ToolchainMissing(ToolchainError):
    pass


class CompileTimeout(ToolchainError):
    pass


class RunnerCrash(ToolchainError):
    pass


class RunTimeout(ToolchainError):
    pass


class AgentMissing(ToolchainError):
    pass


class MalformedReport(ToolchainError):
    pass
