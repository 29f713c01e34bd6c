#!/usr/bin/env python3
"""
rbsim 入口（等价于安装后的 `rbsim` 命令）。
示例:
  python main.py curve --config configs/ou_short.json
  python main.py validate
"""
import sys
from pathlib import Path


ROOT = Path(__file__).resolve().parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))


def main() -> None:
    from rbsim.cli import main as cli_main

    cli_main()


if __name__ == "__main__":
    main()
