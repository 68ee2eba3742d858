import sys

from stabctl.cli import main

sys.exit(main())
