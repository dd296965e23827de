#!/usr/bin/env python3
"""
EmbedMap
Command-line entry point when running from a source checkout
"""
import sys
from pathlib import Path


def get_base_path() -> Path:
    """Directory holding src/, for a source checkout or a frozen build"""
    if getattr(sys, 'frozen', False):
        return Path(getattr(sys, '_MEIPASS', Path(sys.executable).parent))
    return Path(__file__).parent


src_dir = get_base_path() / "src"
if src_dir.is_dir():
    sys.path.insert(0, str(src_dir))
else:
    cwd_src = Path.cwd() / "src"
    if cwd_src.is_dir():
        sys.path.insert(0, str(cwd_src))


def main() -> int:
    """Main entry point"""
    try:
        from cli import main as cli_main
    except ImportError as e:
        print(f"Import Error: {e}")
        print("\nPlease ensure all dependencies are installed:")
        print("  pip install -r requirements.txt")
        print("  Or use: ./launcher.sh (creates .venv automatically)")
        return 1
    return cli_main()


if __name__ == "__main__":
    sys.exit(main())
