#!/usr/bin/env python3
"""RoomWave command-line runner.

Thin wrapper so the CLI works from a checkout without installation.

Usage::

    python scripts/roomwave.py params --config data/ti_awr1443.json
    python scripts/roomwave.py serve --settings service.json
"""

from __future__ import annotations

import os
import sys

# ---------------------------------------------------------------------------
# Ensure the project root is on ``sys.path`` so that ``src.*`` imports work
# when this script is invoked directly from the command line.
# ---------------------------------------------------------------------------
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
