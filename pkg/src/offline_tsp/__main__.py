import sys

from offline_tsp.cli import main

sys.exit(main())
