#!/usr/bin/env python3
"""
Run the toolkit from a source checkout.

Usage:
    python scripts/cka.py simulate --rounds 44827 --p 0.1 --out runs/a
    python scripts/cka.py demo --visibility 0.8082 --out runs/demo
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
