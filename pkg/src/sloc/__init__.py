"""Simulation and verification toolkit for exponential-tilt localization
processes and the equivalent constructions built on them: the tilt SDE, the
Gaussian channel, weighted particle measures, time-changed backward
diffusions, the renormalization flow, static and dynamic endpoint bridges,
and the restricted Gaussian dynamics chain."""

from . import bridge, diagnostics, diffusion, localize, polchinski, rgd, sde, targets

__all__ = [
    "bridge",
    "diagnostics",
    "diffusion",
    "localize",
    "polchinski",
    "rgd",
    "sde",
    "targets",
]

__version__ = "0.1.0"
