import sys

from cpsdetect.main import main

sys.exit(main())
