from __future__ import annotations

import logging
import os

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

load_dotenv()

REGSDML_THREADS = int(os.getenv('REGSDML_THREADS', os.cpu_count() or 1))
REGSDML_LOG_LEVEL = os.getenv('REGSDML_LOG_LEVEL', 'INFO')

# Matrices with a larger condition number are treated as singular.
REGSDML_CONDITION_LIMIT = float(os.getenv('REGSDML_CONDITION_LIMIT', 1e12))

# 'size' weights folds by n_k / N, 'uniform' by 1 / K.
REGSDML_FOLD_WEIGHTING = os.getenv('REGSDML_FOLD_WEIGHTING', 'size')
