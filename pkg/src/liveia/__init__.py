"""LIVEIA: a 2D optical-simulation studio for the language of light.

Psyches are modeled as light-trapping spheres, thoughts as beams with
waveforms, and life situations as forkable scenarios whose optical
consequences (refraction, shadows, equilibrium illumination,
interference) are computed rather than hand-drawn.
"""

__version__ = "0.1.0"
