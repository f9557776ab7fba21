"""Runs the command-line interface: ``python -m prosthestim``"""

import sys

from prosthestim.cli import (
    main
)

if __name__ == '__main__':
    sys.exit(main())
