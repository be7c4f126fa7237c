"""
Configuration settings for the spectral bounds toolkit
"""
import os
from dotenv import load_dotenv

load_dotenv()

# Numerical tolerances
NEG_THRESHOLD = float(os.getenv('NEG_THRESHOLD', 1e-10))
QUAD_TOL = float(os.getenv('QUAD_TOL', 1e-9))
EXTRAP_TOL = float(os.getenv('EXTRAP_TOL', 1e-7))
BOX_GROWTH_FACTOR = float(os.getenv('BOX_GROWTH_FACTOR', 1.5))

# Solver limits
DENSE_LIMIT = int(os.getenv('DENSE_LIMIT', 4000))
LDL_DENSE_LIMIT = int(os.getenv('LDL_DENSE_LIMIT', 2000))
MAX_BOX_RADIUS = int(os.getenv('MAX_BOX_RADIUS', 2000))
MAX_BOX_RADIUS_2D = int(os.getenv('MAX_BOX_RADIUS_2D', 160))
MAX_HIER_LEVELS = int(os.getenv('MAX_HIER_LEVELS', 12))

# Monte-Carlo
SPECTRAL_SEED = os.getenv('SPECTRAL_SEED')  # overrides the seed of a task config
MC_WORKERS = int(os.getenv('MC_WORKERS', 4))
MC_CHUNK_SIZE = int(os.getenv('MC_CHUNK_SIZE', 256))

# Toolkit settings
OUTPUT_DIR = os.getenv('OUTPUT_DIR', 'output')
DATABASE_PATH = os.getenv('DATABASE_PATH', 'data/runs.db')
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
LOG_FILE = os.getenv('LOG_FILE', 'spectral.log')
TOOL_VERSION = '1.0.0'

# Family caps for expanding boxes
FAMILY_BOX_LIMITS = {
    'Z1': MAX_BOX_RADIUS,
    'Z2': MAX_BOX_RADIUS_2D,
    'Fractional': min(MAX_BOX_RADIUS, 1500),
    'Hierarchical': MAX_HIER_LEVELS,
}

# Verify suites, keyed by selector
VERIFY_SUITES = [
    'operators',
    'spectra',
    'kernels',
    'bounds',
    'walks',
    'witnesses',
    'continuum1d',
]
