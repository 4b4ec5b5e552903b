import sys

from kwasr.cli import main

sys.exit(main())
