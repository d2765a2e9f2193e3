"""Allow running the command-line interface as ``python -m sessionpi``."""

import sys

from sessionpi.cli import main

if __name__ == "__main__":
    sys.exit(main())
