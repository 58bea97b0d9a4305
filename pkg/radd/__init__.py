"""
radd: reparameterized absorbing discrete diffusion at desk scale.

Analytic forward/reverse kernels, a time-independent conditional model,
the four equivalent training losses, cache-accelerated samplers and an
enumeration-based verification suite.
"""

__version__ = "0.1.0"
