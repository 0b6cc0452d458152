"""Entry point for ``python -m timebin_bell``."""

import sys

from .cli import main

sys.exit(main())
