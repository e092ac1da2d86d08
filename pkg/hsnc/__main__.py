import sys

from .config import pin_threads, settings

if "--deterministic" in sys.argv[1:]:
    settings.deterministic = True
    pin_threads(1)

from .cli import run  # noqa: E402  numpy must load after the thread pins

if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))
