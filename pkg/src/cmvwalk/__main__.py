import sys

from cmvwalk.cli import main

sys.exit(main())
