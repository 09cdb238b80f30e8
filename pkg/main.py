from __future__ import annotations

import logging
import sys

from regsdml import settings
from regsdml.cli import main


logging.basicConfig(
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s', level=settings.REGSDML_LOG_LEVEL
)


if __name__ == '__main__':
    raise SystemExit(main(sys.argv[1:]))
