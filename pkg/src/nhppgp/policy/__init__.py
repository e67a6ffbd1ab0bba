from .types import *  # noqa: F401,F403
from .cycle import *  # noqa: F401,F403
from .cost import *  # noqa: F401,F403
from .kernel import *  # noqa: F401,F403
