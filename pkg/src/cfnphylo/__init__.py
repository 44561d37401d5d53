"""Symmetric-model phylogenetics: CFN sampling, likelihood inference,
combinatorial tree distances and distinguishing-test batteries."""

__version__ = "0.1.0"
