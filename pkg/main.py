"""
microrelay - Main Entry Point

Runs the command-line driver, so `python main.py opt model.rly --passes fuse`
behaves like the installed `microrelay` command.
"""

import sys

from microrelay.cli import main

if __name__ == "__main__":
    sys.exit(main())
