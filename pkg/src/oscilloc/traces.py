"""Trace containers and CSV interchange.

A :class:`SignalTrace` is a uniformly sampled multi-channel time series; an
:class:`EnergyTrace` is a single energy functional attached to a device or
bus.  CSV layout is ``time,<channel>...`` with time in seconds and fixed
decimal precision 9.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import MismatchedGrid, MissingChannel, NonUniformSampling, ParseError

#: decimal places used for CSV serialization
CSV_DECIMALS = 9
_CSV_FMT = "%.9f"

#: maximum relative timestamp jitter accepted as "uniform sampling"
MAX_REL_JITTER = 1e-6


def _check_uniform(t: np.ndarray) -> float:
    """Return the sample interval, raising NonUniformSampling on jitter."""
    if len(t) < 2:
        raise NonUniformSampling("need at least two samples to infer a sample interval")
    dt = (t[-1] - t[0]) / (len(t) - 1)
    if dt <= 0:
        raise NonUniformSampling("timestamps are not strictly increasing")
    jitter = np.max(np.abs(np.diff(t) - dt))
    if jitter > MAX_REL_JITTER * dt:
        raise NonUniformSampling(
            f"timestamp jitter {jitter:.3e} s exceeds {MAX_REL_JITTER} of dt={dt:.3e} s"
        )
    return float(dt)


@dataclass
class SignalTrace:
    """Uniformly sampled multi-channel time series.

    ``values`` has shape ``(n_samples, n_channels)`` and ``channels`` names
    each column.
    """

    t: np.ndarray
    values: np.ndarray
    channels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape[0] != self.t.shape[0]:
            raise ValueError("values and t length mismatch")
        if len(self.channels) != self.values.shape[1]:
            raise ValueError("channel count mismatch")
        if len(set(self.channels)) != len(self.channels):
            raise ValueError("duplicate channel names")

    @property
    def dt(self) -> float:
        return _check_uniform(self.t)

    @property
    def n(self) -> int:
        return len(self.t)

    def __contains__(self, channel: str) -> bool:
        return channel in self.channels

    def channel(self, name: str) -> np.ndarray:
        try:
            idx = self.channels.index(name)
        except ValueError:
            raise MissingChannel(f"channel {name!r} not present") from None
        return self.values[:, idx]

    def channel_block(self, names: list[str]) -> np.ndarray:
        return np.column_stack([self.channel(n) for n in names])

    def slice_time(self, t0: float, t1: float) -> "SignalTrace":
        m = (self.t >= t0) & (self.t <= t1)
        return SignalTrace(self.t[m], self.values[m], list(self.channels))

    def to_csv(self, path) -> None:
        df = pd.DataFrame(self.values, columns=self.channels)
        df.insert(0, "time", self.t)
        df.to_csv(path, index=False, float_format=_CSV_FMT)

    @classmethod
    def from_csv(cls, path) -> "SignalTrace":
        try:
            df = pd.read_csv(path)
        except (pd.errors.ParserError, UnicodeDecodeError, OSError) as exc:
            raise ParseError(f"cannot read trace CSV {path}: {exc}") from exc
        if df.shape[1] < 2 or df.columns[0] != "time":
            raise ParseError(f"{path}: expected header 'time,<channel>...'")
        vals = df.to_numpy(dtype=float, copy=True)
        t = vals[:, 0]
        _check_uniform(t)
        return cls(t, vals[:, 1:], list(df.columns[1:]))

    def quantized(self) -> "SignalTrace":
        """Trace as it would read back after a CSV round trip.

        Formats every value through the CSV writer and parses it back, so
        analyses on in-memory traces agree bit-for-bit with analyses on
        exported files.
        """
        buf = io.StringIO()
        self.to_csv(buf)
        buf.seek(0)
        df = pd.read_csv(buf)
        vals = df.to_numpy(dtype=float)
        return SignalTrace(vals[:, 0], vals[:, 1:], list(df.columns[1:]))


@dataclass
class EnergyTrace:
    """Time series of one energy functional for one device or bus."""

    t: np.ndarray
    value: np.ndarray
    label: str = ""
    node: str = ""

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        if self.t.shape != self.value.shape:
            raise ValueError("t and value shape mismatch")

    @property
    def dt(self) -> float:
        return _check_uniform(self.t)

    def to_csv(self, path) -> None:
        df = pd.DataFrame({"time": self.t, "value": self.value})
        df.to_csv(path, index=False, float_format=_CSV_FMT)


def require_same_grid(*traces) -> None:
    """Raise MismatchedGrid unless all traces share one time grid."""
    t0 = traces[0].t
    for tr in traces[1:]:
        if tr.t.shape != t0.shape or not np.array_equal(tr.t, t0):
            raise MismatchedGrid("traces are not on the same sampling grid")
