"""Riccati / Grassmannian linearisation solvers.

Submodules: ``xform`` (transforms), ``grassmann`` (linear flow engine),
``smoluchowski``, ``models``, ``graphflow``, ``spde``, ``appendix_flows``
and the ``cli`` experiment runner.
"""

from importlib import metadata as _metadata

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
