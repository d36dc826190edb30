from amaris._amaris import *  # noqa: F401,F403
from amaris._amaris import __version__  # noqa: F401
