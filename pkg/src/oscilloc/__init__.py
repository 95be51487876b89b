"""oscilloc: locate sub-synchronous oscillation sources among converters.

Subpackages: :mod:`~oscilloc.grid_sim` (time-domain network/VSC simulator),
:mod:`~oscilloc.vsc_control` (controller reference semantics),
:mod:`~oscilloc.energy` (energy functionals), :mod:`~oscilloc.spectral`
(spectra, bicoherence, THD), :mod:`~oscilloc.dfa` (describing-function
analysis), :mod:`~oscilloc.locator` (source-location pipeline), and
:mod:`~oscilloc.cli` (command-line interface).
"""

from .errors import OscillocError
from .scenario import NetworkScenario, load_scenario
from .traces import EnergyTrace, SignalTrace

__version__ = "0.1.0"

__all__ = [
    "OscillocError", "NetworkScenario", "load_scenario",
    "EnergyTrace", "SignalTrace", "__version__",
]
