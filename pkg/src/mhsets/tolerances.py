"""Central tolerance table.

Every numerical threshold used by the library lives here so reports can
snapshot the exact values they were produced with.
"""

# linear algebra
SYMMETRY = 1e-12
RECONSTRUCTION = 1e-10
CROSS_ORACLE = 1e-9
JACOBI_MAX_SWEEPS = 60
JACOBI_MAX_DIM = 16

# (m,h) predicate; scaled by field scale / inverse length scale at use sites
TOL_MAX = 1e-6
TOL_MARGIN = 1e-3
TOL_GRAD = 1e-6
NEIGHBORHOOD_FACTOR = 3.0

# fields
METRIC_MIN_EIG = 1e-8
MIN_NODES_PER_AXIS = 8
EXACT_BAND_CELLS = 3

# curvature geometry
BLOWUP_CURVATURE = 1e6
RICCATI_MAX_STEP = 1e-3
NEAR_CUT_SHRINK = 1e-3
TOUCH_BAND_CELLS = 1.0
BARRIER_REL_TOL = 0.03

# varifolds
SUBDIVISION_LEVELS = 4
DEGENERATE_FACE = 1e-12
GAP_TOL = 1e-9
DENSITY_MIN_RADIUS_FACTOR = 5.0

# level-set flow
CFL_FRACTION = 0.4
REINIT_EVERY = 20
GRAD_FLOOR = 1e-6
LIMIT_WINDOW = 50
LIMIT_DISPLACEMENT_CELLS = 0.05
NESTING_FAULT_CELLS = 1.0
NESTING_RATE = 1e-3
EXTINCTION_DEPTH_CELLS = 1.0


def snapshot():
    """Return the tolerance table as a plain dict (for reports)."""
    return {k: v for k, v in globals().items() if k.isupper()}
