"""Oriented monomer-dimer model with aligned-dimer attraction."""

__version__ = "0.1.0"
