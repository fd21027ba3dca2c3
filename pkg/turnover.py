#!/usr/bin/env python3
"""Command line entry point; see `python turnover.py --help`."""
from app.cli import main

if __name__ == "__main__":
    main()
