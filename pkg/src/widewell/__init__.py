"""Phase-space simulation toolkit for quantum wavepackets in wide nonharmonic potentials.

Everything is formulated in trap units: positions are measured in zero-point
lengths, momenta in zero-point momenta, and time is the dimensionless
``tau = omega * t`` where ``omega`` is the curvature scale of the potential and
``omega_t`` the trap frequency used to define the zero-point scales.  With that
choice the phase-space commutator is ``[x, p] = 2i`` and a coherent state has
unit variance in both quadratures.

The package provides two independent routes to the same dynamics:

* an analytic route (``classical``, ``frames``, ``analytic``, ``wigner``)
  built from a classical centroid trajectory, a linearized symplectic frame,
  cumulant integrals of the residual nonlinearity and an Airy-form closed
  expression for the evolved Wigner function, and
* a numerically exact split-operator route (``reference``) with a stochastic
  unraveling of position-localization and potential-fluctuation decoherence.

The command line front end (``widewell``) runs either route from a JSON
scenario description and compares their outputs.
"""

from .potentials import DoubleWell, PolynomialPotential, OrderUnavailable

__all__ = ["DoubleWell", "PolynomialPotential", "OrderUnavailable"]

__version__ = "0.1.0"
