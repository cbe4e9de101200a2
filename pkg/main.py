#!/usr/bin/env python3
import signal
import sys
from src.cli import main as cli_main


def signal_handler(sig, frame):
    print("\nReceived interrupt signal. Shutting down...", file=sys.stderr)
    sys.exit(2)


def main():
    signal.signal(signal.SIGINT, signal_handler)
    signal.signal(signal.SIGTERM, signal_handler)
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
