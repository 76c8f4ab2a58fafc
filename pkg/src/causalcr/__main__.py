import sys

from causalcr.cli import main

sys.exit(main())
