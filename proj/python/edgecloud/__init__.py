"""Edge/cloud task routing."""

from ._edgecloud import *  # noqa: F401,F403
from ._edgecloud import __doc__  # noqa: F401

__version__ = "0.1.0"
