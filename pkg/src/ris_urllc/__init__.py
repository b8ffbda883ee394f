"""RIS-assisted two-stage D2D relaying for short-packet downlink delivery.

Modules: ``fbl`` (finite-blocklength thresholds), ``channel`` (geometry and
Rician draws), ``conic`` (ADMM conic solver), ``sca`` (penalized SCA
beamforming) and ``sim`` (protocol, Monte-Carlo sweep, CLI).
"""

__version__ = "0.1.0"
