"""Transient stability assessment toolkit.

Simulates post-fault multi-machine dynamics, trains an LSTM classifier on the
resulting voltage-phasor sequences, and issues Stable/Unstable verdicts at the
earliest confident measurement cycle.
"""

__version__ = "0.1.0"
