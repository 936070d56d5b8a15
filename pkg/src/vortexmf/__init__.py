"""Mean-field equilibria of planar vortex flows with a fixed point vortex."""

from __future__ import annotations

__version__ = "0.1.0"
