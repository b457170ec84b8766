#!/usr/bin/env python3
"""
Entry point for the liver registration toolkit.
Run `python start.py --help` for the list of commands.
"""

import sys
from cli import cli_main

if __name__ == "__main__":
    try:
        sys.exit(cli_main(sys.argv[1:]))
    except KeyboardInterrupt:
        print("Stopped by user", file=sys.stderr)
        sys.exit(130)
