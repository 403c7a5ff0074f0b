"""Symbolic Dolev-Yao model of the TLS handshake.

A message algebra with the parts/analz/synth knowledge operators, the
handshake's inductive protocol rules as a trace transition system, a
pattern-directed finite intruder, and a bounded explorer that checks
the protocol's security properties and hunts for counterexamples in
deliberately weakened variants.
"""

from .kernel import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
