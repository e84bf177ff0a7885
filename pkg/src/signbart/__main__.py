import sys

from signbart.cli import main

sys.exit(main())
