"""Blind face restoration toolkit.

Synthesizes realistic low-quality faces, parses them into semantic
regions, and restores them with a progressive generator whose features
are modulated by the degraded input and its parsing map at every scale.
"""

__version__ = "0.1.0"
