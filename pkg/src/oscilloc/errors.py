"""Exception hierarchy for oscilloc.

All domain errors derive from :class:`OscillocError`; the CLI maps them to
exit code 1 and everything else to exit code 2.
"""


class OscillocError(Exception):
    """Base class for all domain errors raised by oscilloc."""


class ParseError(OscillocError):
    """A scenario or waveform file could not be parsed.

    Carries location info (section/key or line) in the message.
    """


class NumericalDivergence(OscillocError):
    """A simulated state exceeded the configured magnitude ceiling."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class MismatchedGrid(OscillocError):
    """Two traces do not share the same sampling grid."""


class MissingChannel(OscillocError):
    """A required channel is absent from a trace."""


class NonUniformSampling(OscillocError):
    """Timestamps of an input waveform are not uniformly spaced."""


class TooShort(OscillocError):
    """The signal is too short for the requested analysis."""


class DegenerateNormalization(OscillocError):
    """All bicoherence cells were masked by the normalization floor."""


class InsufficientCells(OscillocError):
    """Too few unmasked bicoherence cells to compute the index."""


class FundamentalNotFound(OscillocError):
    """The fundamental bin power is below the noise floor."""


class NonPositiveAmplitude(OscillocError):
    """A describing function was evaluated at a non-positive amplitude."""


class NoPhaseCrossing(OscillocError):
    """The loop phase never crosses -pi in the search band."""


class NoAmplitudeSolution(OscillocError):
    """The harmonic-balance magnitude condition cannot be satisfied."""


class NotAVscNode(OscillocError):
    """A VSC-only confirmation step was applied to a non-VSC node."""
