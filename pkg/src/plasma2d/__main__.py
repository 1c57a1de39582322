import sys

from plasma2d.cli import main

sys.exit(main())
