"""Six-compartment pancreatic cancer model coupled to axon dynamics."""

__version__ = "0.1.0"
