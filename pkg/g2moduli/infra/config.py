import os
from dotenv import load_dotenv

load_dotenv()


class Config:
    # Runtime
    THREADS = int(os.getenv('G2MODULI_THREADS', os.cpu_count() or 1))
    LOG_LEVEL = os.getenv('G2MODULI_LOG_LEVEL', 'INFO')
    SEED = int(os.getenv('G2MODULI_SEED', 0))
    OUT_DIR = os.getenv('G2MODULI_OUT', 'out')
    METRICS_FILE = os.getenv('G2MODULI_METRICS_FILE')

    # Link geometry
    MIN_GRID = int(os.getenv('G2MODULI_MIN_GRID', 8))
    UNIT_TOL = float(os.getenv('G2MODULI_UNIT_TOL', 1e-8))
    GEOMETRY_TOL = float(os.getenv('G2MODULI_GEOMETRY_TOL', 1e-10))
    NORMAL_TOL = float(os.getenv('G2MODULI_NORMAL_TOL', 1e-10))
    IMMERSION_FLOOR = float(os.getenv('G2MODULI_IMMERSION_FLOOR', 1e-14))
    PSEUDOHOLOMORPHIC_TOL = float(os.getenv('G2MODULI_PSEUDOHOLOMORPHIC_TOL', 1e-6))

    # Spectra
    DENSE_MAX_DOF = int(os.getenv('G2MODULI_DENSE_MAX_DOF', 6000))
    ARNOLDI_COUNT = int(os.getenv('G2MODULI_ARNOLDI_COUNT', 48))
    ARNOLDI_MAXITER = int(os.getenv('G2MODULI_ARNOLDI_MAXITER', 5000))
    ARNOLDI_MAX_SHIFTS = int(os.getenv('G2MODULI_ARNOLDI_MAX_SHIFTS', 64))
    CLUSTER_TOL_FLOOR = float(os.getenv('G2MODULI_CLUSTER_TOL_FLOOR', 1e-6))
    GENERIC_GAP_FLOOR = float(os.getenv('G2MODULI_GENERIC_GAP_FLOOR', 1e-4))
    GENERIC_GAP_MAX = float(os.getenv('G2MODULI_GENERIC_GAP_MAX', 0.25))

    # Constraint-curve tracing
    NEWTON_TOL = float(os.getenv('G2MODULI_NEWTON_TOL', 1e-11))
    NEWTON_MAX_ITER = int(os.getenv('G2MODULI_NEWTON_MAX_ITER', 25))
    STEP_INITIAL = float(os.getenv('G2MODULI_STEP_INITIAL', 0.01))
    STEP_MIN = float(os.getenv('G2MODULI_STEP_MIN', 1e-6))
    STEP_MAX = float(os.getenv('G2MODULI_STEP_MAX', 0.02))
    MAX_STEPS = int(os.getenv('G2MODULI_MAX_STEPS', 40000))
    CLOSURE_TOL = float(os.getenv('G2MODULI_CLOSURE_TOL', 1e-6))
    RANK_TOL = float(os.getenv('G2MODULI_RANK_TOL', 1e-8))
    FLOW_RTOL = float(os.getenv('G2MODULI_FLOW_RTOL', 1e-12))

    # AC meshes and verification
    RLADDER = os.getenv('G2MODULI_RLADDER', '5:640:8')
    FD_STEP = float(os.getenv('G2MODULI_FD_STEP', 1e-4))
    PROJECTION_TOL = float(os.getenv('G2MODULI_PROJECTION_TOL', 1e-10))
    PROJECTION_MAX_ITER = int(os.getenv('G2MODULI_PROJECTION_MAX_ITER', 60))
    DISTANCE_FLOOR = float(os.getenv('G2MODULI_DISTANCE_FLOOR', 1e-13))
    TRIPLE_FLOOR = float(os.getenv('G2MODULI_TRIPLE_FLOOR', 1e-14))
    CLUSTER_TOL_MAX = float(os.getenv('G2MODULI_CLUSTER_TOL_MAX', 0.25))
    ROUGHNESS_MAX = float(os.getenv('G2MODULI_ROUGHNESS_MAX', 0.25))
    DEFECT_SAMPLES = int(os.getenv('G2MODULI_DEFECT_SAMPLES', 100))
    WINDOW = os.getenv('G2MODULI_WINDOW', '-3:3')
