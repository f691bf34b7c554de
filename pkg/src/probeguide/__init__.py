"""Patient body registration and anatomy-referenced ultrasound probe guidance.

The package fits a parametric body model to multi-frame camera-posed body
estimates, fuses the frames into a consensus registration, and projects
named scan-plane rules onto the torso surface to produce probe poses.
"""

__version__ = "0.1.0"

from .geometry import RigidTransform, compose, invert, transform_points  # noqa: F401
