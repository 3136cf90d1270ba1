"""Modal analysis, controller synthesis, and closed-loop simulation for a
boundary-damped wave equation driving a reaction-diffusion equation through
a distributed coupling profile."""

__version__ = "0.1.0"
