"""Exception and warning types shared across the package.

Every error carries a short machine-readable ``category`` used by the CLI
when it reports failures on stderr.
"""


class PdcTomoError(Exception):
    category = "error"


class ValidationError(PdcTomoError, ValueError):
    category = "validation"

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ParseError(PdcTomoError):
    category = "parse"


class UnknownKey(ValidationError):
    category = "unknown_key"


class DegenerateGrid(PdcTomoError):
    category = "degenerate_grid"


class ZeroAmplitude(PdcTomoError, ValueError):
    category = "zero_amplitude"


class OffGridSeed(PdcTomoError, ValueError):
    category = "off_grid_seed"


class TraceTooShort(PdcTomoError, ValueError):
    category = "trace_too_short"


class NoStationaryRegion(PdcTomoError):
    category = "no_stationary_region"


class StripeOutsideSupport(PdcTomoError):
    category = "stripe_outside_support"


class GridMismatch(PdcTomoError, ValueError):
    category = "grid_mismatch"


class SchemaError(PdcTomoError):
    category = "schema"


class SaturationWarning(UserWarning):
    """Raised (as a warning) when samples were clipped at the digitizer range."""


class UnreachableLobeWarning(UserWarning):
    """A lobe above threshold is not crossed by any stationary stripe."""
