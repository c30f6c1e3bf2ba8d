import logging
import os
from datetime import datetime


def setup_logger(name='v2v_aoi', level=None, log_dir=None):
    log_dir = log_dir or os.getenv('V2V_LOG_DIR', 'logs')
    level_name = (level or os.getenv('V2V_LOG_LEVEL', 'INFO')).upper()
    log_level = getattr(logging, level_name, logging.INFO)

    logger = logging.getLogger(name)
    logger.setLevel(log_level)

    if logger.handlers:
        return logger

    os.makedirs(log_dir, exist_ok=True)
    log_filename = os.path.join(log_dir, f'v2v_aoi_{datetime.now().strftime("%Y%m%d")}.log')

    file_handler = logging.FileHandler(log_filename, encoding='utf-8')
    file_handler.setLevel(log_level)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(log_level)

    formatter = logging.Formatter(
        '%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    file_handler.setFormatter(formatter)
    console_handler.setFormatter(formatter)

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)

    return logger
