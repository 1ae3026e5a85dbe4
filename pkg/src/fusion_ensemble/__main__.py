"""``python -m fusion_ensemble``."""

import sys

from .cli import main

sys.exit(main())
