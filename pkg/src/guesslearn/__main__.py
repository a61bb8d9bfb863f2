import sys

from guesslearn.cli import main

sys.exit(main())
