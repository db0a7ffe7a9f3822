"""
Startup script for the fluxcav FastAPI server.

Configures logging for the environment and starts uvicorn, with reload in
development.
"""

import logging
import sys
from pathlib import Path

import uvicorn

# Add the project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from fluxcav.config import settings
from fluxcav.core.logging import setup_logging


def main():
    """Configure logging and start the server for the current environment."""
    log_file = None
    if settings.ENVIRONMENT == "production":
        log_file = "logs/fluxcav_api.log"

    setup_logging(log_file=log_file)
    logger = logging.getLogger(__name__)

    logger.info("🚀 Starting %s API Server", settings.APP_NAME)
    logger.info("📊 Environment: %s", settings.ENVIRONMENT)
    logger.info("🐍 Python version: %s", sys.version.split()[0])
    logger.info("📁 Project root: %s", project_root)

    if settings.ENVIRONMENT == "development":
        uvicorn.run(
            "fluxcav.main:app",
            host=settings.HOST,
            port=settings.PORT,
            reload=True,
            log_level="info",
            access_log=True,
            workers=1
        )
    else:
        # One process; numerical work is spread over WORKERS threads inside it
        uvicorn.run(
            "fluxcav.main:app",
            host=settings.HOST,
            port=settings.PORT,
            reload=False,
            log_level="warning",
            access_log=False,
            workers=1
        )


if __name__ == "__main__":
    main()
