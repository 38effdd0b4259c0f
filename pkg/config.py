import os
from dotenv import load_dotenv

load_dotenv()


class Config:
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_FILE = os.getenv('LOG_FILE', 'softdiamond.log')
    OUTPUT_DIR = os.getenv('OUTPUT_DIR', 'runs')
    RESULTS_DB = os.getenv('RESULTS_DB', 'database/runs.db')

    # Quadratura della densità (costruzione tabella offline, quindi generosa)
    QUAD_ABS_TOL = float(os.getenv('QUAD_ABS_TOL', 1e-9))
    QUAD_MAX_PANELS = int(os.getenv('QUAD_MAX_PANELS', 10 ** 6))

    # Tabella delle derivate: delta = epsilon / n_grid = 0.002
    DEFAULT_EPSILON = float(os.getenv('DEFAULT_EPSILON', 0.8))
    DEFAULT_N_GRID = int(os.getenv('DEFAULT_N_GRID', 400))
