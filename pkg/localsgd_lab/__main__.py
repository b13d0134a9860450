"""Entry point for python -m localsgd_lab."""

from localsgd_lab.cli import main

if __name__ == "__main__":
    main()
