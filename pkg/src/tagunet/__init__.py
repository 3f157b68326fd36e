"""Topology-agnostic graph U-Net for node-wise scalar field prediction."""

__version__ = "0.1.0"
