"""Simulation of phase retrieval with twin-beam quantum-correlated illumination.

The package follows the light: :mod:`qcpr.source` builds a partially
coherent mode ensemble, :mod:`qcpr.optics` propagates it through the
object and defocus planes, :mod:`qcpr.detector` turns intensities into
correlated photon counts, :mod:`qcpr.quantumcorr` models and subtracts the
shared noise, :mod:`qcpr.tie` retrieves the phase and :mod:`qcpr.metrics`
scores it. :mod:`qcpr.cli` runs configured studies end to end.
"""
__version__ = "0.1.0"
