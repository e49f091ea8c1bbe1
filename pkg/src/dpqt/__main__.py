import sys

from dpqt.cli import main

sys.exit(main())
