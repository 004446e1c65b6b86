import sys

from hiermarket.cli import main

sys.exit(main())
