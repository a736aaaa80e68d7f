import sys

from csmil.main import main

sys.exit(main())
