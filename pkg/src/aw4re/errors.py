"""Exception hierarchy shared across the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class BehindCamera(EngineError):
    """Point projects at or behind the near plane."""


class DepthOutOfRange(EngineError):
    """Depth outside the camera's (near, far] interval."""


class MissingMask(EngineError):
    """Cross-time evidence frame has no dynamic mask."""


class CorpusError(EngineError):
    """Base class for evidence-corpus persistence errors."""


class CorruptManifest(CorpusError):
    pass


class MissingFrameFile(CorpusError):
    pass


class ChecksumMismatch(CorpusError):
    pass


class PluginError(EngineError):
    """Base class for external completion-plugin failures."""


class PluginTimeout(PluginError):
    pass


class MalformedResponse(PluginError):
    pass


class EvidenceViolation(PluginError):
    """Plugin altered evidence-backed pixels beyond tolerance in strict mode."""
