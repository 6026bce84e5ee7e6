"""
Numerical engine for Finsler metric measure spaces evolving under a geometric flow.
"""
import jax

# Nested forward-mode derivatives need double precision.
jax.config.update("jax_enable_x64", True)

__version__ = "0.1.0"
