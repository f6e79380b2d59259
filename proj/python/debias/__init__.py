"""Python access to the prompt-debiasing core."""

from ._debias import *  # noqa: F401,F403
from ._debias import __doc__  # noqa: F401
