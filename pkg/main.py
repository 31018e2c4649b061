"""
hierkrig - Kriging-based optimization in hierarchical search spaces
Entry point of the benchmark command line (``python main.py <subcommand> ...``)
"""

import sys

from app.api.cli import main

if __name__ == "__main__":
    sys.exit(main())
