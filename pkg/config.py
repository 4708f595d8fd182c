# config.py - Configuration file for the path-entanglement certification toolkit

import os
from dotenv import load_dotenv

load_dotenv()

TOOL_NAME = "pathcert"
TOOL_VERSION = "0.3.0"

# Source and detection defaults (measured values of the 32-path source)
DEFAULT_DIM = 32
DEFAULT_RATE_HZ = 4000.0  # Pair counting rate of the entangled source
DEFAULT_EFFICIENCY = 0.16  # Average coincidence efficiency
DEFAULT_COINCIDENCE_WINDOW_S = 3e-9  # 3 ns coincidence window
DEFAULT_DURATION_S = 400.0  # Acquisition time per projective setting (about 0.002 fidelity error at d=32)
DEFAULT_SINGLES_HZ = 0.0  # Per-arm singles rate feeding accidentals (0 = none)
DEFAULT_SEED = 20201
DEFAULT_RESAMPLES = 200
MIN_RESAMPLES = 100
CONSISTENCY_SIGMAS = 3.0  # Poisson sigmas allowed above |Re<ii|rho|jj>| <= (p_i + p_j)/2

# Largest measured cross population <0j|rho|0j>, used for every i != j when
# only the same-index diagonal settings were recorded
CROSSTALK_ASSUMED = 4.49e-5

# Numerical tolerances
NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
TRACE_TOL = 1e-12
PROBABILITY_TOL = 1e-9
LEAKAGE_TOL = 1e-9
PROJECTOR_TOL = 1e-9
UNITARY_TOL = 1e-10
PSD_CHECK_MAX_DIM = 256  # larger matrices skip the eigenvalue check at construction

# Optical lattice metadata (topology only; millimetres are for display)
LATTICE_UNIT_MM = 1.0
BEAM_PITCH_UNITS = 2  # 2 mm between neighbouring source beams
SOURCE_SPLIT_ANGLE_DEG = 22.5
MUB_ANALYZER_ANGLE_DEG = 22.5
MAX_MUB_QUBITS = 6
MAX_PIPELINE_DIM = 32

# File names
COUNTS_FILE = "counts.csv"
REPORT_FILE = "report.json"
PLOT_FILE = "plot.csv"
PLOT_IMAGE_FILE = "fidelity_curves.png"
SETTINGS_TEXT_FILE = "settings.txt"
SETTINGS_JSON_FILE = "settings.json"
NETWORK_JSON_FILE = "network.json"
VERIFICATION_FILE = "verification.json"

# Directories
LOGS_DIR = os.getenv("PATHCERT_LOGS_DIR", "logs")
OUTPUT_DIR = os.getenv("PATHCERT_OUTPUT_DIR", "runs")

# Debug Settings
DEBUG_MODE = os.getenv("PATHCERT_DEBUG", "1") == "1"
LOG_LEVEL = os.getenv("PATHCERT_LOG_LEVEL", "INFO")  # DEBUG, INFO, WARNING, ERROR, CRITICAL

# CLI exit codes
EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_VERIFICATION = 3
EXIT_INCOMPLETE = 4
