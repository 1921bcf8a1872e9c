"""Run the service: PORT and MODEL_NAME come from the environment."""

import os

import uvicorn

from .app import create_app


def main() -> None:
    port = int(os.environ.get("PORT", "8301"))
    uvicorn.run(create_app(), host="0.0.0.0", port=port, log_level="info")


if __name__ == "__main__":
    main()
