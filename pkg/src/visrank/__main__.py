import sys

from visrank.cli import main

sys.exit(main())
