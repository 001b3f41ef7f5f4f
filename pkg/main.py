"""
Точка входа движка доверия trust.
"""

import sys

from cli import run_cli


def main():
    """Главная функция запуска"""
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
