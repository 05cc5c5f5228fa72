"""Berry phase of a bound state dragged around a loop in a homogeneous magnetic field."""

__version__ = "0.1.0"
