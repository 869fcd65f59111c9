"""Allow ``python -m bioperf``."""

import sys

from bioperf.cli import main

if __name__ == "__main__":
    sys.exit(main())
