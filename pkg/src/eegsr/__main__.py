"""Run the command-line interface as ``python -m eegsr``."""
import sys

from .cli import main

sys.exit(main())
