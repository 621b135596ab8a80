#!/usr/bin/env python3
"""Development entrypoint for the STAR-RIS simulator."""
from __future__ import annotations

from app.cli import main

if __name__ == "__main__":
    main()
