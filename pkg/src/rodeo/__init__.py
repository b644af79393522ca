"""Classical simulation of the rodeo algorithm for eigenstate preparation.

Modules: ``spectral`` (eigenbasis bookkeeping), ``hamiltonians`` (spin chain,
Anderson ring, file format), ``engine`` (rodeo cycles), ``scan`` (energy
scans and search), ``baselines`` (adiabatic evolution, phase estimation)
and ``cli``.
"""

__version__ = "0.1.0"

from .errors import RodeoError, ValidationError  # noqa: E402,F401
