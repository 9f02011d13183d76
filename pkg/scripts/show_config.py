import os
import sys

# Печать действующей конфигурации SwiptFog: пути и значения ключей.

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config import (  # noqa: E402
    ConfigError,
    effective_values,
    load_config,
    user_settings_path,
    writable_app_dir,
)


def main() -> int:
    path = sys.argv[1] if len(sys.argv) > 1 else None
    print(f"user_settings={user_settings_path()}")
    print(f"user_settings_exists={user_settings_path().is_file()}")
    print(f"log_file={writable_app_dir() / 'logs' / 'app.log'}")
    try:
        cfg = load_config(path)
    except ConfigError as e:
        print(f"error={e}")
        return 2
    for key, value in effective_values(cfg):
        print(f"{key}={value}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
