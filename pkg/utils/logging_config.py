"""
Logging Configuration
Console and rotating-file logging for the PrivaCare pipeline
"""

import logging
import logging.handlers
from datetime import datetime
from pathlib import Path
from typing import Dict, Optional


LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _rotating(path: Path, level: int, max_bytes: int, backups: int,
              formatter: logging.Formatter) -> logging.Handler:
    handler = logging.handlers.RotatingFileHandler(path, maxBytes=max_bytes, backupCount=backups)
    handler.setLevel(level)
    handler.setFormatter(formatter)
    return handler


def _channel(name: str, handler: Optional[logging.Handler]) -> None:
    channel = logging.getLogger(name)
    channel.handlers.clear()
    channel.setLevel(logging.INFO)
    if handler is not None:
        channel.addHandler(handler)
        channel.propagate = False  # Don't duplicate to root logger
    else:
        channel.propagate = True


def setup_logging(log_level: str = "INFO", log_dir: Optional[str] = None) -> None:
    """
    Setup logging configuration

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_dir: Directory for rotating log files; console only when None
    """
    level = getattr(logging, log_level.upper())
    log_format = logging.Formatter(fmt=LOG_FORMAT, datefmt='%Y-%m-%d %H:%M:%S')

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    root_logger.handlers.clear()

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(log_format)
    root_logger.addHandler(console_handler)

    privacy_handler = run_handler = None
    if log_dir is not None:
        log_path = Path(log_dir)
        log_path.mkdir(parents=True, exist_ok=True)
        stamp = datetime.now().strftime('%Y%m%d')

        root_logger.addHandler(_rotating(
            log_path / f"privacare_{stamp}.log", logging.DEBUG, 10 * 1024 * 1024, 5, log_format))
        root_logger.addHandler(_rotating(
            log_path / f"errors_{stamp}.log", logging.ERROR, 5 * 1024 * 1024, 3, log_format))

        # privacy audit trail is kept longer than the run log
        privacy_handler = _rotating(
            log_path / f"privacy_{stamp}.log", logging.INFO, 2 * 1024 * 1024, 10, log_format)
        run_handler = _rotating(
            log_path / f"run_{stamp}.log", logging.INFO, 10 * 1024 * 1024, 5, log_format)

    _channel('privacy', privacy_handler)
    _channel('run', run_handler)

    logging.info("Logging system initialized")


class PrivacyLogger:
    """Specialized logger for privacy-budget events"""

    def __init__(self):
        self.logger = logging.getLogger('privacy')

    def log_noise_multiplier(self, sigma: float, target_epsilon: float, delta: float, steps: int):
        self.logger.info(f"NOISE_MULTIPLIER - sigma: {sigma:.4f}, Target epsilon: {target_epsilon}, "
                         f"Delta: {delta:.2e}, Steps: {steps}")

    def log_epoch(self, epoch: int, steps: int, epsilon: float, delta: float):
        """Log cumulative spend at the end of an epoch"""
        self.logger.info(f"EPSILON_SPENT - Epoch: {epoch}, Steps: {steps}, "
                         f"Epsilon: {epsilon:.4f}, Delta: {delta:.2e}")

    def log_budget_exhausted(self, steps: int, epsilon: float, budget: float):
        self.logger.warning(f"BUDGET_EXHAUSTED - Steps: {steps}, Epsilon: {epsilon:.4f}, "
                            f"Budget: {budget}")


class RunLogger:
    """Specialized logger for stage timings, op counters and benchmark rows"""

    def __init__(self):
        self.logger = logging.getLogger('run')

    def log_stage(self, subcommand: str, stage: str, duration: float):
        self.logger.info(f"STAGE - {subcommand} - {stage} - Duration: {duration:.3f}s")

    def log_counters(self, label: str, counters: Dict[str, int]):
        """Log homomorphic op counters of a ciphertext"""
        parts = ", ".join(f"{k}: {v}" for k, v in counters.items())
        self.logger.info(f"COUNTERS - {label} - {parts}")

    def log_performance(self, variant: str, operation: str, duration: float):
        self.logger.info(f"PERFORMANCE - {variant} - {operation} - Duration: {duration:.3f}s")


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance with the specified name"""
    return logging.getLogger(name)
