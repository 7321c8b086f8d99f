"""Stochastic simulators: particle-based (micro) and subvolume SSA (meso)."""

from .env import (
    AbsorbingSurface,
    Ball,
    Behavior,
    Box,
    Cylinder,
    Environment,
    FirstOrderReaction,
    PointRelease,
    RealizationSeries,
    RectPatch,
    Release,
    Surface,
    SphereShell,
    TransparentSphere,
    UniformRelease,
    build_dumbbell,
    dumbbell_release,
    voxel_connected,
)
from .micro import (
    CirEstimate,
    MicroState,
    estimate_cir,
    free_sphere_counts,
    micro_run,
    micro_runs,
    micro_step,
    realization_rng,
    sphere_release,
)
from .meso import (
    CountProbe,
    MesoGrid,
    MesoReaction,
    Propensities,
    SizeCheck,
    meso_next_event,
    meso_propensities,
    meso_run,
    meso_select_event,
    subvolume_size_check,
)
