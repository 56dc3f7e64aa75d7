"""Allow `python -m edgesound`."""

import sys

from .cli import main

sys.exit(main())
