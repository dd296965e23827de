"""
EmbedMap source package

Modules import each other by bare name (``from config import config_manager``),
so the installed console script puts this directory on sys.path first.
"""
import sys
from pathlib import Path

_src_dir = str(Path(__file__).parent)
if _src_dir not in sys.path:
    sys.path.insert(0, _src_dir)
