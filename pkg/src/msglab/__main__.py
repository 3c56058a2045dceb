import sys

from msglab.harness import main

sys.exit(main())
