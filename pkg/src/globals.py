import dotenv, logging, os


dotenv.load_dotenv("src/.env")

LOG_LEVEL = os.getenv("CMN_LOG_LEVEL", "INFO").upper()
logging.basicConfig(
    level=getattr(logging, LOG_LEVEL, logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)

# Condition number of M above which a warning is logged / the solve is refused
COND_WARN = float(os.getenv("CMN_COND_WARN", "1e8"))
COND_LIMIT = float(os.getenv("CMN_COND_LIMIT", "1e13"))

# Smallest |M_kk| accepted when eliminating mode k
PIVOT_TOL = float(os.getenv("CMN_PIVOT_TOL", "1e-12"))

# Two modes of one oscillator closer than this (Hz) are the same mode
MERGE_TOL_HZ = float(os.getenv("CMN_MERGE_TOL_HZ", "1e-3"))

DEFAULT_THREADS = int(os.getenv("CMN_THREADS", "1"))
