from pydantic import BaseModel
from dotenv import load_dotenv
import os

load_dotenv()

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class Settings(BaseModel):
    deterministic: bool = os.getenv("HSNC_DETERMINISTIC", "0").lower() in ("1", "true")
    check_finite: bool = os.getenv("HSNC_CHECK_FINITE", "0").lower() in ("1", "true")
    log_level: str = os.getenv("HSNC_LOG_LEVEL", "INFO")
    num_threads: int | None = int(os.getenv("HSNC_NUM_THREADS")) if os.getenv("HSNC_NUM_THREADS") else None


settings = Settings()


def pin_threads(n: int | None) -> None:
    """Pin BLAS/OpenMP pools. Only effective before numpy is first imported."""
    if n is None:
        return
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


pin_threads(1 if settings.deterministic else settings.num_threads)
