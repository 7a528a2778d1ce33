import logging

logger = logging.getLogger("triplepoint")
