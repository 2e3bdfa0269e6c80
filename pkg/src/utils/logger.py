"""
Logging utility for the inversion pipeline
"""
import logging
import os
import sys
from datetime import datetime
from pathlib import Path

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class Logger:
    """
    Configurable logger that outputs to the console and, optionally, to a
    dated file inside the run's output directory
    """
    def __init__(self, name="coeffinv", log_level=logging.INFO, log_dir=None):
        """
        Initialize the logger

        Args:
            name: Logger name
            log_level: Minimum log level to record
            log_dir: Directory for the dated log file; None disables file output
        """
        self.logger = logging.getLogger(name)
        self.logger.setLevel(log_level)
        self.logger.propagate = False

        # Clear any existing handlers
        if self.logger.handlers:
            self.logger.handlers.clear()

        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        self.logger.addHandler(console_handler)

        self.log_file = None
        if log_dir is not None:
            log_dir = Path(log_dir)
            os.makedirs(log_dir, exist_ok=True)

            self.log_file = log_dir / f"{datetime.now().strftime('%Y-%m-%d')}.log"
            file_handler = logging.FileHandler(self.log_file, encoding='utf-8')
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
            self.logger.addHandler(file_handler)

    def child(self, suffix):
        """Return a child logger sharing this logger's handlers"""
        return self.logger.getChild(suffix)

    def debug(self, message):
        self.logger.debug(message)

    def info(self, message):
        self.logger.info(message)

    def warning(self, message):
        self.logger.warning(message)

    def error(self, message):
        self.logger.error(message)

    def critical(self, message):
        self.logger.critical(message)

    def close(self):
        """Flush and detach all handlers"""
        for handler in list(self.logger.handlers):
            handler.flush()
            handler.close()
            self.logger.removeHandler(handler)

    def get_logger(self):
        """Return the underlying logger object"""
        return self.logger


class SolverComponent:
    """Base class giving numerical components an injectable logger"""

    def __init__(self, logger=None):
        if isinstance(logger, Logger):
            logger = logger.get_logger()
        self.logger = logger or logging.getLogger(self.__class__.__module__)

    def log_debug(self, message: str):
        if self.logger:
            self.logger.debug(message)

    def log_info(self, message: str):
        """Log an info message"""
        if self.logger:
            self.logger.info(message)

    def log_warning(self, message: str):
        """Log a warning message"""
        if self.logger:
            self.logger.warning(message)

    def log_error(self, message: str):
        """Log an error message"""
        if self.logger:
            self.logger.error(message)
