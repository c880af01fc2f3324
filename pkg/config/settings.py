import os
from dotenv import load_dotenv

load_dotenv(dotenv_path=os.path.join(os.path.dirname(os.path.dirname(__file__)), '.env')) # Load .env from project root


def _env_threads():
    value = os.getenv('COCYCLE_LAB_THREADS')
    if value is None or value.strip() == "":
        return None
    return value.strip()


class Config:
    """Base configuration."""
    DEBUG = False
    TESTING = False

    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    # Overrides [run] threads of any RunConfig ("auto" or an integer)
    THREADS = _env_threads()

    # Output layout
    OUTPUT_DIR = os.getenv('COCYCLE_LAB_OUTPUT_DIR', 'output')
    CHECKPOINT_DB_NAME = os.getenv('CHECKPOINT_DB_NAME', 'checkpoint.db')
    DATABASE_URL = os.getenv('DATABASE_URL') # Explicit checkpoint URL; default is sqlite inside the output dir
    CSV_FLOAT_FORMAT = "%.17g" # round-trips binary64 exactly
    CSV_ENCODING = "utf-8"

    # Numerics
    DEFAULT_T_MAX = int(os.getenv('COCYCLE_LAB_T_MAX', 1_000_000))
    MP_DPS = int(os.getenv('COCYCLE_LAB_MP_DPS', 50)) # digits kept for exact rotation arithmetic


class DevelopmentConfig(Config):
    DEBUG = True
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'DEBUG')


class TestingConfig(Config):
    TESTING = True
    DATABASE_URL = os.getenv('TEST_DATABASE_URL') # None -> sqlite file in the test's tmp output dir
    LOG_LEVEL = 'WARNING'


class ProductionConfig(Config):
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')


# Helper to get config based on environment variable
def get_config():
    env = os.getenv('COCYCLE_LAB_ENV', 'production')
    if env == 'development':
        return DevelopmentConfig()
    elif env == 'testing':
        return TestingConfig()
    return ProductionConfig()

# Initialize config instance for easy import
current_config = get_config()
