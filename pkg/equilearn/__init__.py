from . import config
from . import dependencies
