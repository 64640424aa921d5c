import sys

from answerchange.cli import main

sys.exit(main())
