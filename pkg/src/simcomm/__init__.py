"""Stacked intelligent metasurface (SIM) link simulator.

Modules: ``geometry`` (diffraction channels), ``tscc`` (codeword fitting),
``codebook``, ``beamcode`` (Hamming-coded region index), ``training``
(beam-training protocols), ``srm`` (QoS-constrained sum-rate solver),
``config``/``experiments``/``cli`` (orchestration).
"""

__version__ = "0.1.0"
