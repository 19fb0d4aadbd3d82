"""
Nonlocal symmetry toolkit - command-line entry point.

Equivalent to the ``nonlocal-symmetry`` console script.
"""

import sys

from app.cli.router import main

if __name__ == "__main__":
    sys.exit(main())
