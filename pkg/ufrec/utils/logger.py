"""
Logging utility for the UFRec framework.
Provides centralized logging configuration and utilities.
"""
import logging
from datetime import datetime
from logging.handlers import RotatingFileHandler

from config.config_manager import config


class Logger:
    """Custom logger class for training and evaluation runs."""

    _loggers = {}

    @staticmethod
    def get_logger(name="ufrec", log_level=None):
        """
        Get or create a logger instance.

        Args:
            name: Logger name
            log_level: Console logging level (default: [Logging] level from config.ini)

        Returns:
            Logger instance
        """
        if name not in Logger._loggers:
            logger = logging.getLogger(name)
            logger.setLevel(logging.DEBUG)
            logger.handlers.clear()  # Remove any existing handlers

            console_level = log_level or config.get("Logging", "level", "INFO")
            file_level = config.get("Logging", "file_level", "DEBUG")

            # Create formatters
            detailed_formatter = logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s',
                datefmt='%Y-%m-%d %H:%M:%S'
            )
            console_formatter = logging.Formatter(
                '%(levelname)s - %(message)s'
            )

            # File handler with rotation
            log_file = config.logs_path / f"ufrec_{datetime.now().strftime('%Y%m%d')}.log"
            file_handler = RotatingFileHandler(
                log_file,
                maxBytes=config.getint("Logging", "max_bytes", 10 * 1024 * 1024),
                backupCount=config.getint("Logging", "backup_count", 5)
            )
            file_handler.setLevel(file_level)
            file_handler.setFormatter(detailed_formatter)

            # Console handler
            console_handler = logging.StreamHandler()
            console_handler.setLevel(console_level)
            console_handler.setFormatter(console_formatter)

            logger.addHandler(file_handler)
            logger.addHandler(console_handler)

            Logger._loggers[name] = logger

        return Logger._loggers[name]


def get_logger(name="ufrec"):
    """Convenience function to get logger instance."""
    return Logger.get_logger(name)
