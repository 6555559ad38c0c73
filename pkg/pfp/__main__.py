import sys

from pfp.main import main

sys.exit(main())
