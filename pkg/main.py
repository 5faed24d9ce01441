import logging
import sys

logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

from layerlq.cli import main  # python main.py synthesize florentine:1

if __name__ == "__main__":
    sys.exit(main())
