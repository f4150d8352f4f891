"""Root entry point for the modal identification toolkit"""
import sys

from app.main import main

if __name__ == "__main__":
    sys.exit(main())
