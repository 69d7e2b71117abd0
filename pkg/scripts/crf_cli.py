#!/usr/bin/env python3
"""Convenience CLI wrapper for the CRF toolkit.

Usage:
  python scripts/crf_cli.py train --train data/fixtures/train.conll \
      --templates data/fixtures/templates.txt --model models/chunker.crf
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from crf.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
