import sys

from trailercf.cli import main

sys.exit(main())
