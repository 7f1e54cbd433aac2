"""Multi-view multi-person 3D pose association over a joint parsing, matching and tracking graph."""

__version__ = "0.1.0"
