"""Entry point for the chemotactic pulse laboratory."""

from src.app import main

if __name__ == "__main__":
    main()
