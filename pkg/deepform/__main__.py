import sys

from deepform.app import main

sys.exit(main())
